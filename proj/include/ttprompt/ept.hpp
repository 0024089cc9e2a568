// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ttprompt/numcore.hpp"

namespace ttprompt {

/// Binary view-availability vector. Bit v is 1 iff view v is observed.
///
/// Patterns map to bank indices as sum_v bits[v] * 2^v, so view 0 is the
/// least significant bit.
class MissingPattern {
 public:
  MissingPattern() = default;
  explicit MissingPattern(std::vector<std::uint8_t> bits);

  static MissingPattern from_index(std::uint64_t index, std::size_t views);
  static MissingPattern all_observed(std::size_t views);

  std::size_t views() const noexcept { return bits_.size(); }
  bool observed(std::size_t view) const noexcept { return bits_[view] != 0; }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::uint64_t index() const noexcept;
  std::size_t observed_count() const noexcept;
  bool any_observed() const noexcept { return observed_count() > 0; }
  void set(std::size_t view, bool value) { bits_[view] = value ? 1 : 0; }
  /// View 0 first, e.g. "101".
  std::string to_string() const;

  friend bool operator==(const MissingPattern&, const MissingPattern&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// Throws a validation error unless the pattern observes at least one view.
void require_sample_indicator(const MissingPattern& pattern);

enum class BankKind { Ept, Dense, PerView };

const char* to_string(BankKind kind) noexcept;
BankKind parse_bank_kind(const std::string& name);

/// Largest materialized bank (values = 2^n * d) before materialize_all refuses.
inline constexpr std::uint64_t kMaterializeBudget = std::uint64_t{1} << 26;

/// A learnable map from missing-view pattern to a d-dimensional prompt.
class PromptBank {
 public:
  virtual ~PromptBank() = default;

  virtual BankKind kind() const noexcept = 0;
  virtual std::size_t views() const noexcept = 0;
  virtual std::size_t prompt_dim() const noexcept = 0;

  virtual void initialize(Rng& rng) = 0;

  /// Prompt for one pattern as a d x 1 column.
  virtual Matrix prompt(const MissingPattern& pattern) const = 0;
  /// Adds d<upstream, prompt(pattern)> / d(parameters) into each updatable
  /// parameter's grad.
  virtual void accumulate_grad(const MissingPattern& pattern, std::span<const double> upstream) = 0;

  virtual std::vector<ParamTensor*> parameters() = 0;
  virtual std::vector<const ParamTensor*> parameters() const = 0;
  virtual std::unique_ptr<PromptBank> clone() const = 0;

  /// d x 2^n matrix whose column j is prompt(from_index(j)).
  Matrix materialize_all(std::uint64_t budget = kMaterializeBudget) const;

  std::size_t pattern_count() const noexcept { return std::size_t{1} << views(); }

 protected:
  void check_pattern(const MissingPattern& pattern) const;
  void check_upstream(std::span<const double> upstream) const;
};

/// Basis A (d x k) times tensor-train coefficients.
///
/// Core l (1-based) has two slices of shape r_{l-1} x r_l selected by bit
/// l-1 of the pattern; the terminal core is r_n x k. r_0 is fixed to 1 so the
/// chain product is a 1 x k row.
class EptBank final : public PromptBank {
 public:
  struct Gradients {
    Matrix basis;
    std::vector<std::array<Matrix, 2>> cores;
    Matrix terminal;
  };

  /// `ranks` holds r_0..r_n; r_0 must be 1. Parameters start at zero.
  EptBank(std::size_t views, std::size_t prompt_dim, std::size_t factors,
          std::vector<std::size_t> ranks);

  static std::vector<std::size_t> uniform_ranks(std::size_t views, std::size_t rank);

  /// Basis ~ U(+-1/sqrt(k)); cores and terminal ~ N(0, 0.02^2).
  void initialize(Rng& rng) override;

  BankKind kind() const noexcept override { return BankKind::Ept; }
  std::size_t views() const noexcept override { return views_; }
  std::size_t prompt_dim() const noexcept override { return prompt_dim_; }
  std::size_t factors() const noexcept { return factors_; }
  const std::vector<std::size_t>& ranks() const noexcept { return ranks_; }

  /// beta_m = G_1(m_1) ... G_n(m_n) G_{n+1}, a 1 x k row.
  Matrix coefficients(const MissingPattern& pattern) const;
  Matrix prompt(const MissingPattern& pattern) const override;
  /// Exact gradients of <upstream, A beta_m^T> for every parameter block.
  Gradients backward(const MissingPattern& pattern, std::span<const double> upstream) const;
  void accumulate_grad(const MissingPattern& pattern, std::span<const double> upstream) override;

  ParamTensor& basis() noexcept { return basis_; }
  const ParamTensor& basis() const noexcept { return basis_; }
  /// `core` is 0-based (core 0 reads view 0).
  ParamTensor& core_slice(std::size_t core, std::size_t slice) { return cores_.at(core).at(slice); }
  const ParamTensor& core_slice(std::size_t core, std::size_t slice) const {
    return cores_.at(core).at(slice);
  }
  ParamTensor& terminal() noexcept { return terminal_; }
  const ParamTensor& terminal() const noexcept { return terminal_; }

  std::vector<ParamTensor*> parameters() override;
  std::vector<const ParamTensor*> parameters() const override;
  std::unique_ptr<PromptBank> clone() const override;

  /// Learnable element count of this instance.
  std::uint64_t element_count() const noexcept;

 private:
  void validate_chain() const;

  std::size_t views_;
  std::size_t prompt_dim_;
  std::size_t factors_;
  std::vector<std::size_t> ranks_;
  ParamTensor basis_;
  std::vector<std::array<ParamTensor, 2>> cores_;
  ParamTensor terminal_;
};

/// One free column per pattern index (d x 2^n table).
class DenseBank final : public PromptBank {
 public:
  DenseBank(std::size_t views, std::size_t prompt_dim);

  void initialize(Rng& rng) override;

  BankKind kind() const noexcept override { return BankKind::Dense; }
  std::size_t views() const noexcept override { return views_; }
  std::size_t prompt_dim() const noexcept override { return table_.value.rows(); }

  Matrix prompt(const MissingPattern& pattern) const override;
  void accumulate_grad(const MissingPattern& pattern, std::span<const double> upstream) override;

  ParamTensor& table() noexcept { return table_; }
  const ParamTensor& table() const noexcept { return table_; }

  std::vector<ParamTensor*> parameters() override;
  std::vector<const ParamTensor*> parameters() const override;
  std::unique_ptr<PromptBank> clone() const override;

 private:
  std::size_t views_;
  ParamTensor table_;
};

/// One prompt per view; a pattern's prompt is the sum over its observed views.
class PerViewBank final : public PromptBank {
 public:
  PerViewBank(std::size_t views, std::size_t prompt_dim);

  void initialize(Rng& rng) override;

  BankKind kind() const noexcept override { return BankKind::PerView; }
  std::size_t views() const noexcept override { return prompts_.size(); }
  std::size_t prompt_dim() const noexcept override { return prompt_dim_; }

  Matrix prompt(const MissingPattern& pattern) const override;
  void accumulate_grad(const MissingPattern& pattern, std::span<const double> upstream) override;

  ParamTensor& view_prompt(std::size_t view) { return prompts_.at(view); }
  const ParamTensor& view_prompt(std::size_t view) const { return prompts_.at(view); }

  std::vector<ParamTensor*> parameters() override;
  std::vector<const ParamTensor*> parameters() const override;
  std::unique_ptr<PromptBank> clone() const override;

 private:
  std::size_t prompt_dim_;
  std::vector<ParamTensor> prompts_;
};

enum class CountKind { Ept, Map, Msp, EpeP };

const char* to_string(CountKind kind) noexcept;

struct ParamCount {
  std::uint64_t count = 0;
  /// The asymptotic bound formula value; equals `count` except for EPT, where
  /// `count` is the exact element sum and `bound` is n*R^2*k + d*k.
  std::uint64_t bound = 0;
  std::string formula;
};

/// Parameter accounting for the prompt-bank families.
///
/// EPT exact: sum_l r_{l-1}*2*r_l + r_n*k + d*k with r_0 = 1 and r_1..r_n = R
/// unless `ranks` (r_0..r_n) is given. MAP: 2^n*d. MSP: n*d. EPE-P: n^3 + d*R.
ParamCount param_count(CountKind kind, std::size_t views, std::size_t prompt_dim,
                       std::size_t factors, std::size_t max_rank,
                       std::span<const std::size_t> ranks = {});

std::unique_ptr<PromptBank> make_bank(BankKind kind, std::size_t views, std::size_t prompt_dim,
                                      std::size_t factors, std::vector<std::size_t> ranks);

}  // namespace ttprompt
