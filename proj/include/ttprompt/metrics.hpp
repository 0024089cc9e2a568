// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "ttprompt/numcore.hpp"

namespace ttprompt {

/// Average precision of the ranking induced by `scores` (descending; equal
/// scores keep ascending sample order). Precision is averaged at the rank of
/// every positive. Empty when the class has no positives.
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const double> labels);

inline constexpr double kDecisionThreshold = 0.5;

struct MetricValues {
  double map = 0.0;
  double cf1 = 0.0;
  double of1 = 0.0;
  std::size_t evaluated_classes = 0;
  /// Classes without a single positive; excluded from mAP and CF1.
  std::size_t skipped_classes = 0;
};

/// mAP, macro F1 (CF1) and micro F1 (OF1) over an N x C score table.
/// Predictions are positive when score >= 0.5.
MetricValues compute_metrics(const Matrix& scores, const Matrix& labels);

}  // namespace ttprompt
