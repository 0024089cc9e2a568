// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "ttprompt/error.hpp"
#include "ttprompt/metrics.hpp"

using namespace ttprompt;

namespace {

std::vector<double> column(const Matrix& m, std::size_t c) {
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = m(i, c);
  return out;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("average precision matches the pairwise oracle") {
    Rng rng(100);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 1 + rng.below(64), c = 1 + rng.below(8);
      Matrix scores(n, c), labels(n, c);
      for (double& v : scores.values()) v = std::round(rng.uniform() * 10.0) / 10.0;  // force ties
      for (double& v : labels.values()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
      const MetricValues m = compute_metrics(scores, labels);
      double sum = 0.0;
      std::size_t used = 0;
      for (std::size_t k = 0; k < c; ++k) {
        const auto want = oracle::ap(column(scores, k), column(labels, k));
        const auto got = average_precision(column(scores, k), column(labels, k));
        REQUIRE(want.has_value() == got.has_value());
        if (!want) continue;
        CHECK(std::abs(*got - *want) <= 1e-10);
        sum += *want;
        ++used;
      }
      CHECK(m.evaluated_classes == used);
      CHECK(m.skipped_classes == c - used);
      if (used) CHECK(std::abs(m.map - sum / used) <= 1e-10);
    }
  }

  TEST_CASE("perfect scores give one everywhere") {
    Matrix labels(6, 3, std::vector<double>{1, 0, 1, 0, 1, 0, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 1, 1});
    const MetricValues m = compute_metrics(labels, labels);
    CHECK(m.map == 1.0);
    CHECK(m.cf1 == 1.0);
    CHECK(m.of1 == 1.0);
  }

  TEST_CASE("inverted scores give the worst ranking") {
    // 2 positives among 5, ranked last: precisions 1/4 and 2/5.
    std::vector<double> labels{1, 1, 0, 0, 0};
    std::vector<double> scores{0, 0, 1, 1, 1};
    const auto ap = average_precision(scores, labels);
    REQUIRE(ap);
    CHECK(*ap == doctest::Approx((1.0 / 4.0 + 2.0 / 5.0) / 2.0));
    CHECK(*ap == doctest::Approx(*oracle::ap(scores, labels)));
  }

  TEST_CASE("ties keep ascending sample order") {
    std::vector<double> scores{0.5, 0.5, 0.5};
    CHECK(*average_precision(scores, std::vector<double>{1, 0, 0}) == doctest::Approx(1.0));
    CHECK(*average_precision(scores, std::vector<double>{0, 0, 1}) == doctest::Approx(1.0 / 3.0));
  }

  TEST_CASE("random scores give ap near prevalence") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      std::vector<double> scores(1000), labels(1000);
      for (std::size_t i = 0; i < 1000; ++i) {
        scores[i] = rng.uniform();
        labels[i] = i % 2 == 0 ? 1.0 : 0.0;
      }
      CHECK(std::abs(*average_precision(scores, labels) - 0.5) <= 0.05);
    }
  }

  TEST_CASE("threshold is inclusive") {
    Matrix scores(2, 1, std::vector<double>{0.5, 0.4999});
    Matrix labels(2, 1, std::vector<double>{1.0, 0.0});
    const MetricValues m = compute_metrics(scores, labels);
    CHECK(m.cf1 == 1.0);
    CHECK(m.of1 == 1.0);
  }

  TEST_CASE("f1 values on a hand-checked table") {
    // class 0: tp 1, fp 1, fn 1; class 1: tp 2, fp 0, fn 0
    Matrix scores(3, 2, std::vector<double>{0.9, 0.8, 0.7, 0.6, 0.1, 0.2});
    Matrix labels(3, 2, std::vector<double>{1, 1, 0, 1, 1, 0});
    const MetricValues m = compute_metrics(scores, labels);
    CHECK(m.cf1 == doctest::Approx((0.5 + 1.0) / 2.0));
    CHECK(m.of1 == doctest::Approx(2.0 * 3.0 / (2.0 * 3.0 + 1.0 + 1.0)));
  }

  TEST_CASE("class order and sample order invariances") {
    Rng rng(7);
    Matrix scores(30, 4), labels(30, 4);
    for (double& v : scores.values()) v = rng.uniform();
    for (double& v : labels.values()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    const MetricValues base = compute_metrics(scores, labels);
    Matrix s2(30, 4), l2(30, 4);
    for (std::size_t i = 0; i < 30; ++i)
      for (std::size_t c = 0; c < 4; ++c) {
        s2(i, c) = scores(i, 3 - c);
        l2(i, c) = labels(i, 3 - c);
      }
    CHECK(compute_metrics(s2, l2).map == doctest::Approx(base.map).epsilon(1e-14));
    Matrix s3(30, 4), l3(30, 4);
    for (std::size_t i = 0; i < 30; ++i)
      for (std::size_t c = 0; c < 4; ++c) {
        s3(i, c) = scores(29 - i, c);
        l3(i, c) = labels(29 - i, c);
      }
    CHECK(compute_metrics(s3, l3).of1 == base.of1);
  }

  TEST_CASE("classes without positives are skipped and an empty set fails") {
    Matrix scores(2, 2, std::vector<double>{0.9, 0.1, 0.2, 0.3});
    Matrix labels(2, 2, std::vector<double>{1, 0, 0, 0});
    const MetricValues m = compute_metrics(scores, labels);
    CHECK(m.evaluated_classes == 1);
    CHECK(m.skipped_classes == 1);
    CHECK(m.map == 1.0);
    CHECK_THROWS_AS(compute_metrics(Matrix(0, 2), Matrix(0, 2)), Error);
  }
}
