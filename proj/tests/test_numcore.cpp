// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "ttprompt/error.hpp"
#include "ttprompt/numcore.hpp"

using namespace ttprompt;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_SUITE("numcore") {
  TEST_CASE("matrix construction checks sizes") {
    CHECK_THROWS_AS(Matrix(2, 3, std::vector<double>(5)), Error);
    Matrix m(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
    CHECK(m(1, 0) == 4.0);
    CHECK(m.row(1)[2] == 6.0);
    CHECK(m.shape_string() == "(2x3)");
  }

  TEST_CASE("matmul agrees with a naive triple loop") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t r = 1 + rng.below(6), k = 1 + rng.below(6), c = 1 + rng.below(6);
      const Matrix a = random_matrix(r, k, rng), b = random_matrix(k, c, rng);
      CHECK(max_abs_diff(matmul(a, b), oracle::naive_matmul(a, b)) < 1e-13);
      CHECK(max_abs_diff(matmul_nt(a, transpose(b)), oracle::naive_matmul(a, b)) < 1e-13);
      CHECK(max_abs_diff(matmul_tn(transpose(a), b), oracle::naive_matmul(a, b)) < 1e-13);
    }
  }

  TEST_CASE("matmul rejects inner dimension mismatch") {
    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), Error);
    try {
      matmul(Matrix(2, 3), Matrix(2, 3));
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Shape);
      CHECK(e.module() == "numcore");
    }
  }

  TEST_CASE("sigmoid is stable at extremes") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(sigmoid(800.0) == 1.0);
    CHECK(std::isfinite(sigmoid(-800.0)));
    CHECK(sigmoid(2.0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));
  }

  TEST_CASE("softmax rows sum to one and survive large inputs") {
    Matrix x(2, 3, std::vector<double>{1000, 1001, 1002, 0, 1, 2});
    const Matrix s = softmax_rows(x);
    for (std::size_t r = 0; r < 2; ++r) {
      double sum = 0.0;
      for (double v : s.row(r)) sum += v;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK(all_finite(s));
    CHECK(s(0, 2) == doctest::Approx(s(1, 2)).epsilon(1e-12));
  }

  TEST_CASE("rng is deterministic and forks are distinct") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng base(42);
    Rng f1 = base.fork(1), f2 = base.fork(2), f1b = base.fork(1);
    const auto x1 = f1.next_u64();
    CHECK(x1 == f1b.next_u64());
    CHECK(x1 != f2.next_u64());
  }

  TEST_CASE("below stays in range and shuffle permutes") {
    Rng rng(5);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 7000; ++i) {
      const auto v = rng.below(7);
      REQUIRE(v < 7);
      ++counts[v];
    }
    for (int c : counts) CHECK(c > 800);
    std::vector<int> items(50);
    std::iota(items.begin(), items.end(), 0);
    rng.shuffle(std::span<int>(items));
    std::set<int> seen(items.begin(), items.end());
    CHECK(seen.size() == 50);
    CHECK(!std::is_sorted(items.begin(), items.end()));
  }

  TEST_CASE("normal draws have roughly unit moments") {
    Rng rng(9);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const double x = rng.normal();
      sum += x;
      sq += x * x;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
  }

  TEST_CASE("first adam step moves each coordinate by lr against the gradient sign") {
    ParamTensor p("p", Matrix(1, 3, std::vector<double>{0.0, 1.0, -1.0}));
    p.grad = Matrix(1, 3, std::vector<double>{2.0, -0.5, 1e-3});
    ParamTensor frozen("f", Matrix(1, 1, std::vector<double>{3.0}));
    frozen.frozen = true;
    frozen.grad = Matrix(1, 1, std::vector<double>{1.0});
    AdamOptions opt;
    opt.lr = 0.1;
    std::vector<ParamTensor*> params{&p, &frozen};
    adam_step(params, opt, 1);
    // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
    CHECK(p.value[0] == doctest::Approx(-0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-12));
    CHECK(p.value[1] == doctest::Approx(1.0 + 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
    CHECK(p.value[2] == doctest::Approx(-1.0 - 0.1 * 1e-3 / (1e-3 + 1e-8)).epsilon(1e-12));
    CHECK(frozen.value[0] == 3.0);
  }

  TEST_CASE("finite differences recover a quadratic gradient") {
    const Matrix at(2, 2, std::vector<double>{1.0, -2.0, 0.5, 3.0});
    const Matrix g = finite_diff_grad(
        [](const Matrix& x) {
          double s = 0.0;
          for (std::size_t i = 0; i < x.size(); ++i) s += (i + 1.0) * x[i] * x[i];
          return s;
        },
        at);
    for (std::size_t i = 0; i < at.size(); ++i) {
      CHECK(g[i] == doctest::Approx(2.0 * (i + 1.0) * at[i]).epsilon(1e-8));
    }
  }

  TEST_CASE("finite differences restore the parameter") {
    ParamTensor p("p", Matrix(1, 2, std::vector<double>{0.25, -0.75}));
    const Matrix before = p.value;
    finite_diff_grad([&] { return p.value[0] * p.value[1]; }, p);
    CHECK(p.value == before);
  }

  TEST_CASE("fan-in init stays inside its bound") {
    Rng rng(3);
    const Matrix m = init_uniform_fan_in(8, 16, 16, rng);
    for (double v : m.values()) CHECK(std::abs(v) <= 0.25);
  }
}
