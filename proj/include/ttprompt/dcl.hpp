// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "ttprompt/ept.hpp"
#include "ttprompt/numcore.hpp"

namespace ttprompt {

/// s_ij = sum_v m_i[v] * sigmoid(w[v]) * m_j[v]; zero iff the patterns share no view.
double overlap_score(const MissingPattern& a, const MissingPattern& b, std::span<const double> w);

/// Pairs index into the pattern list given to build_pairs, with first < second.
struct PairSets {
  std::vector<std::pair<std::size_t, std::size_t>> positives;
  std::vector<std::pair<std::size_t, std::size_t>> negatives;
};

/// Splits every unordered pair by the sign of its overlap score. Pairs are
/// enumerated in (i, j) lexicographic order over the input list.
PairSets build_pairs(std::span<const MissingPattern> patterns, std::span<const double> w);

struct DclOptions {
  double alpha = 1.0;
  /// Extension: scale each positive pair's squared distance by s_ij so the
  /// view weights receive gradient. Off reproduces the plain margin loss.
  bool weighted_positive_term = false;
};

struct DclResult {
  double loss = 0.0;
  double positive_term = 0.0;
  double negative_term = 0.0;
  /// d x |patterns|, gradient w.r.t. each prompt column.
  Matrix prompt_grad;
  /// n x 1, gradient w.r.t. the raw view weights w.
  Matrix weight_grad;
};

/// Margin contrastive loss over prompt columns:
///   mean_P ||p_i - p_j||^2 + mean_N max(0, alpha - ||p_i - p_j||)^2
/// An empty pair set contributes zero.
DclResult dcl_loss(const Matrix& prompts, std::span<const MissingPattern> patterns,
                   const PairSets& pairs, std::span<const double> w, const DclOptions& options);

}  // namespace ttprompt
