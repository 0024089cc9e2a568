// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttprompt/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "ttprompt/error.hpp"

namespace ttprompt {

namespace {
constexpr const char* kModule = "metrics";
}

std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const double> labels) {
  if (scores.size() != labels.size()) {
    fail(ErrorKind::Shape, kModule,
         "average_precision: " + std::to_string(scores.size()) + " scores for " +
             std::to_string(labels.size()) + " labels");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  double precision_sum = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] > 0.5) {
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return precision_sum / static_cast<double>(hits);
}

MetricValues compute_metrics(const Matrix& scores, const Matrix& labels) {
  if (!scores.same_shape(labels)) {
    fail(ErrorKind::Shape, kModule,
         "scores " + scores.shape_string() + " and labels " + labels.shape_string() + " differ");
  }
  if (scores.rows() == 0) fail(ErrorKind::Validation, kModule, "empty test set");

  MetricValues out;
  double ap_sum = 0.0, f1_sum = 0.0;
  std::size_t tp_all = 0, fp_all = 0, fn_all = 0;
  std::vector<double> column_scores(scores.rows()), column_labels(scores.rows());
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.rows(); ++i) {
      column_scores[i] = scores(i, c);
      column_labels[i] = labels(i, c);
      const bool predicted = scores(i, c) >= kDecisionThreshold;
      const bool actual = labels(i, c) > 0.5;
      tp += predicted && actual;
      fp += predicted && !actual;
      fn += !predicted && actual;
    }
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
    const auto ap = average_precision(column_scores, column_labels);
    if (!ap) {
      ++out.skipped_classes;
      continue;
    }
    ++out.evaluated_classes;
    ap_sum += *ap;
    f1_sum += 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  }
  if (out.evaluated_classes > 0) {
    out.map = ap_sum / static_cast<double>(out.evaluated_classes);
    out.cf1 = f1_sum / static_cast<double>(out.evaluated_classes);
  }
  const std::size_t denom = 2 * tp_all + fp_all + fn_all;
  // No positives and no positive predictions anywhere: nothing was missed.
  out.of1 = denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp_all) / static_cast<double>(denom);
  return out;
}

}  // namespace ttprompt
