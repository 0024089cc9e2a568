// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttprompt/dcl.hpp"

#include <cmath>
#include <set>

#include "ttprompt/error.hpp"

namespace ttprompt {

namespace {
constexpr const char* kModule = "dcl";

double column_distance(const Matrix& prompts, std::size_t i, std::size_t j) {
  double acc = 0.0;
  for (std::size_t r = 0; r < prompts.rows(); ++r) {
    const double diff = prompts(r, i) - prompts(r, j);
    acc += diff * diff;
  }
  return std::sqrt(acc);
}
}  // namespace

double overlap_score(const MissingPattern& a, const MissingPattern& b, std::span<const double> w) {
  if (a.views() != b.views() || a.views() != w.size()) {
    fail(ErrorKind::Shape, kModule,
         "overlap_score: lengths " + std::to_string(a.views()) + ", " +
             std::to_string(b.views()) + " and weights " + std::to_string(w.size()) + " differ");
  }
  double s = 0.0;
  for (std::size_t v = 0; v < a.views(); ++v) {
    if (a.observed(v) && b.observed(v)) s += sigmoid(w[v]);
  }
  return s;
}

PairSets build_pairs(std::span<const MissingPattern> patterns, std::span<const double> w) {
  std::set<std::uint64_t> seen;
  for (const auto& p : patterns) {
    if (!p.any_observed()) {
      fail(ErrorKind::Validation, kModule, "the all-missing pattern cannot enter pair building");
    }
    if (!seen.insert(p.index()).second) {
      fail(ErrorKind::Validation, kModule, "duplicate pattern " + p.to_string());
    }
  }
  PairSets pairs;
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    for (std::size_t j = i + 1; j < patterns.size(); ++j) {
      if (overlap_score(patterns[i], patterns[j], w) > 0.0) {
        pairs.positives.emplace_back(i, j);
      } else {
        pairs.negatives.emplace_back(i, j);
      }
    }
  }
  return pairs;
}

DclResult dcl_loss(const Matrix& prompts, std::span<const MissingPattern> patterns,
                   const PairSets& pairs, std::span<const double> w, const DclOptions& options) {
  if (!(options.alpha > 0.0)) fail(ErrorKind::Config, kModule, "margin alpha must be positive");
  if (!all_finite(prompts)) fail(ErrorKind::Numeric, kModule, "non-finite prompt values");
  if (patterns.size() != prompts.cols()) {
    fail(ErrorKind::Shape, kModule,
         "prompt matrix has " + std::to_string(prompts.cols()) + " columns for " +
             std::to_string(patterns.size()) + " patterns");
  }

  DclResult out;
  out.prompt_grad = Matrix(prompts.rows(), prompts.cols());
  out.weight_grad = Matrix(w.size(), 1);
  const std::size_t d = prompts.rows();

  if (!pairs.positives.empty()) {
    const double scale = 1.0 / static_cast<double>(pairs.positives.size());
    for (const auto& [i, j] : pairs.positives) {
      double sq = 0.0;
      for (std::size_t r = 0; r < d; ++r) {
        const double diff = prompts(r, i) - prompts(r, j);
        sq += diff * diff;
      }
      double weight = 1.0;
      if (options.weighted_positive_term) {
        weight = overlap_score(patterns[i], patterns[j], w);
        // d s_ij / d w_v = m_iv m_jv sigmoid'(w_v)
        for (std::size_t v = 0; v < w.size(); ++v) {
          if (patterns[i].observed(v) && patterns[j].observed(v)) {
            const double s = sigmoid(w[v]);
            out.weight_grad[v] += scale * sq * s * (1.0 - s);
          }
        }
      }
      out.positive_term += scale * weight * sq;
      for (std::size_t r = 0; r < d; ++r) {
        const double g = 2.0 * scale * weight * (prompts(r, i) - prompts(r, j));
        out.prompt_grad(r, i) += g;
        out.prompt_grad(r, j) -= g;
      }
    }
  }

  if (!pairs.negatives.empty()) {
    const double scale = 1.0 / static_cast<double>(pairs.negatives.size());
    for (const auto& [i, j] : pairs.negatives) {
      const double dist = column_distance(prompts, i, j);
      const double gap = options.alpha - dist;
      if (gap <= 0.0) continue;
      out.negative_term += scale * gap * gap;
      if (dist == 0.0) continue;  // direction undefined; subgradient 0
      // d/dp_i (alpha - ||p_i - p_j||)^2 = -2 gap (p_i - p_j) / ||p_i - p_j||
      for (std::size_t r = 0; r < d; ++r) {
        const double g = -2.0 * scale * gap * (prompts(r, i) - prompts(r, j)) / dist;
        out.prompt_grad(r, i) += g;
        out.prompt_grad(r, j) -= g;
      }
    }
  }

  out.loss = out.positive_term + out.negative_term;
  return out;
}

}  // namespace ttprompt
