// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference computations used by the unit and acceptance tests.
// Each one is written the slow, obvious way and shares no code with the
// library beyond the plain data containers.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "ttprompt/ept.hpp"
#include "ttprompt/numcore.hpp"

namespace oracle {

using ttprompt::Matrix;

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(p, j);
      out(i, j) = acc;
    }
  return out;
}

/// Fully materialized (2 x ... x 2 x k) coefficient tensor, flattened as
/// [pattern index][s]. Every entry is the explicit sum over all rank-index
/// tuples (a_1..a_n) of the product of core entries.
inline std::vector<std::vector<double>> tt_full_tensor(const ttprompt::EptBank& bank) {
  const std::size_t n = bank.views(), k = bank.factors();
  const auto& r = bank.ranks();
  std::vector<std::vector<double>> full(std::size_t{1} << n, std::vector<double>(k, 0.0));
  for (std::size_t m = 0; m < full.size(); ++m) {
    std::vector<std::size_t> a(n + 1, 0);  // a[0] = 0 always (r_0 = 1)
    while (true) {
      double prod = 1.0;
      for (std::size_t l = 0; l < n; ++l) {
        const std::size_t bit = (m >> l) & 1U;
        prod *= bank.core_slice(l, bit).value(a[l], a[l + 1]);
      }
      for (std::size_t s = 0; s < k; ++s) full[m][s] += prod * bank.terminal().value(a[n], s);
      // odometer over a[1..n]
      std::size_t pos = n;
      while (pos >= 1) {
        if (++a[pos] < r[pos]) break;
        a[pos] = 0;
        --pos;
      }
      if (pos == 0) break;
    }
  }
  return full;
}

/// Average precision by pairwise rank counting, O(N^2). Ties are ranked
/// by ascending sample index.
inline std::optional<double> ap(const std::vector<double>& scores, const std::vector<double>& labels) {
  const std::size_t n = scores.size();
  auto rank = [&](std::size_t i) {
    std::size_t r = 1;
    for (std::size_t j = 0; j < n; ++j) {
      if (scores[j] > scores[i] || (scores[j] == scores[i] && j < i)) ++r;
    }
    return r;
  };
  std::size_t positives = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] <= 0.5) continue;
    ++positives;
    const std::size_t ri = rank(i);
    std::size_t hits = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (labels[j] > 0.5 && rank(j) <= ri) ++hits;
    }
    sum += static_cast<double>(hits) / static_cast<double>(ri);
  }
  if (positives == 0) return std::nullopt;
  return sum / static_cast<double>(positives);
}

/// Pattern pairs (i < j) split by whether they share an observed view.
inline std::pair<std::size_t, std::size_t> count_pairs(const std::vector<std::uint64_t>& bits) {
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < bits.size(); ++i)
    for (std::size_t j = i + 1; j < bits.size(); ++j) ((bits[i] & bits[j]) ? pos : neg) += 1;
  return {pos, neg};
}

inline double gelu(double u) {
  const double c = std::sqrt(2.0 / 3.14159265358979323846);
  return 0.5 * u * (1.0 + std::tanh(c * (u + 0.044715 * u * u * u)));
}

}  // namespace oracle
