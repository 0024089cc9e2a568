// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "ttprompt/dcl.hpp"
#include "ttprompt/error.hpp"

using namespace ttprompt;

namespace {

std::vector<MissingPattern> all_patterns(std::size_t n) {
  std::vector<MissingPattern> out;
  for (std::uint64_t m = 1; m < (std::uint64_t{1} << n); ++m) out.push_back(MissingPattern::from_index(m, n));
  return out;
}

double dist(const Matrix& p, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) s += (p(r, i) - p(r, j)) * (p(r, i) - p(r, j));
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE("dcl") {
  TEST_CASE("overlap score is a sigmoid-weighted inner product") {
    const auto a = MissingPattern::from_index(0b011, 3), b = MissingPattern::from_index(0b110, 3);
    const std::vector<double> w{0.3, -1.2, 2.0};
    CHECK(overlap_score(a, b, w) == doctest::Approx(1.0 / (1.0 + std::exp(1.2))));
    CHECK(overlap_score(MissingPattern::from_index(1, 3), MissingPattern::from_index(6, 3), w) == 0.0);
    const std::vector<double> zero(3, 0.0);
    CHECK(overlap_score(MissingPattern::from_index(7, 3), MissingPattern::from_index(7, 3), zero) ==
          doctest::Approx(1.5));
  }

  TEST_CASE("pair counts over all patterns of three views") {
    const auto pats = all_patterns(3);
    std::vector<std::uint64_t> bits;
    for (const auto& p : pats) bits.push_back(p.index());
    const auto [pos, neg] = oracle::count_pairs(bits);
    // Zero overlap: the 3 complementary pairs plus the 3 pairs of distinct singletons.
    CHECK(pos == 15);
    CHECK(neg == 6);
    Rng rng(1);
    const PairSets first = build_pairs(pats, std::vector<double>{0.0, 0.0, 0.0});
    CHECK(first.positives.size() == pos);
    CHECK(first.negatives.size() == neg);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> w(3);
      for (double& x : w) x = rng.normal(0.0, 5.0);
      const PairSets p = build_pairs(pats, w);
      CHECK(p.positives == first.positives);
      CHECK(p.negatives == first.negatives);
    }
  }

  TEST_CASE("duplicate or empty patterns are rejected") {
    std::vector<MissingPattern> dup{MissingPattern::from_index(1, 2), MissingPattern::from_index(1, 2)};
    CHECK_THROWS_AS(build_pairs(dup, std::vector<double>{0, 0}), Error);
    std::vector<MissingPattern> empty{MissingPattern::from_index(0, 2), MissingPattern::from_index(1, 2)};
    CHECK_THROWS_AS(build_pairs(empty, std::vector<double>{0, 0}), Error);
  }

  TEST_CASE("loss matches a direct pair sum") {
    const auto pats = all_patterns(2);  // 01, 10, 11
    Matrix prompts(3, 3);
    Rng rng(4);
    for (double& v : prompts.values()) v = rng.uniform(-0.4, 0.4);
    const std::vector<double> w{0.2, -0.1};
    const PairSets pairs = build_pairs(pats, w);
    const DclResult r = dcl_loss(prompts, pats, pairs, w, DclOptions{});
    // positives: (0,2), (1,2); negatives: (0,1)
    const double pos = (std::pow(dist(prompts, 0, 2), 2) + std::pow(dist(prompts, 1, 2), 2)) / 2.0;
    const double neg = std::pow(std::max(0.0, 1.0 - dist(prompts, 0, 1)), 2);
    CHECK(r.positive_term == doctest::Approx(pos).epsilon(1e-13));
    CHECK(r.negative_term == doctest::Approx(neg).epsilon(1e-13));
    CHECK(r.loss == doctest::Approx(pos + neg).epsilon(1e-13));
  }

  TEST_CASE("empty pair sets contribute zero") {
    const std::vector<MissingPattern> one{MissingPattern::from_index(3, 2)};
    Matrix prompts(2, 1, std::vector<double>{1.0, 2.0});
    const DclResult r = dcl_loss(prompts, one, build_pairs(one, std::vector<double>{0, 0}),
                                 std::vector<double>{0, 0}, DclOptions{});
    CHECK(r.loss == 0.0);
    CHECK(frobenius_norm(r.prompt_grad) == 0.0);
  }

  TEST_CASE("far-apart negatives are inactive") {
    const std::vector<MissingPattern> pats{MissingPattern::from_index(1, 2), MissingPattern::from_index(2, 2)};
    Matrix prompts(1, 2, std::vector<double>{0.0, 5.0});
    const DclResult r = dcl_loss(prompts, pats, build_pairs(pats, std::vector<double>{0, 0}),
                                 std::vector<double>{0, 0}, DclOptions{});
    CHECK(r.loss == 0.0);
  }

  TEST_CASE("prompt gradient agrees with finite differences") {
    const auto pats = all_patterns(3);
    Matrix prompts(4, pats.size());
    Rng rng(12);
    for (double& v : prompts.values()) v = rng.uniform(-0.3, 0.3);
    const std::vector<double> w{0.5, -0.5, 1.0};
    const PairSets pairs = build_pairs(pats, w);
    const DclResult r = dcl_loss(prompts, pats, pairs, w, DclOptions{0.8, false});
    const Matrix fd = finite_diff_grad(
        [&](const Matrix& p) { return dcl_loss(p, pats, pairs, w, DclOptions{0.8, false}).loss; },
        prompts);
    for (std::size_t i = 0; i < fd.size(); ++i) CHECK(r.prompt_grad[i] == doctest::Approx(fd[i]).epsilon(1e-7));
  }

  TEST_CASE("view weights get exactly zero gradient from the plain loss") {
    const auto pats = all_patterns(3);
    Matrix prompts(4, pats.size());
    Rng rng(13);
    for (double& v : prompts.values()) v = rng.normal();
    const std::vector<double> w{0.5, -0.5, 1.0};
    const DclResult r = dcl_loss(prompts, pats, build_pairs(pats, w), w, DclOptions{});
    for (double g : r.weight_grad.values()) CHECK(g == 0.0);
  }

  TEST_CASE("weighted positive term gives view weights a real gradient") {
    const auto pats = all_patterns(3);
    Matrix prompts(4, pats.size());
    Rng rng(14);
    for (double& v : prompts.values()) v = rng.uniform(-0.3, 0.3);
    Matrix w(3, 1, std::vector<double>{0.5, -0.5, 1.0});
    const DclOptions opt{1.0, true};
    const DclResult r = dcl_loss(prompts, pats, build_pairs(pats, w.values()), w.values(), opt);
    const Matrix fd = finite_diff_grad(
        [&](const Matrix& x) {
          return dcl_loss(prompts, pats, build_pairs(pats, x.values()), x.values(), opt).loss;
        },
        w);
    CHECK(frobenius_norm(r.weight_grad) > 0.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(r.weight_grad[i] == doctest::Approx(fd[i]).epsilon(1e-7));
  }

  TEST_CASE("non-positive margin is a config error") {
    const auto pats = all_patterns(2);
    Matrix prompts(2, 3);
    CHECK_THROWS_AS(dcl_loss(prompts, pats, build_pairs(pats, std::vector<double>{0, 0}),
                             std::vector<double>{0, 0}, DclOptions{0.0, false}),
                    Error);
  }
}
