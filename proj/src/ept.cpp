// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttprompt/ept.hpp"

#include <numeric>

#include "ttprompt/error.hpp"

namespace ttprompt {

namespace {
constexpr const char* kModule = "ept";
constexpr double kPromptInitStd = 0.02;
constexpr std::size_t kMaxViews = 62;

void check_dims(std::size_t views, std::size_t prompt_dim) {
  if (views == 0) fail(ErrorKind::Config, kModule, "view count must be at least 1");
  if (views > kMaxViews) {
    fail(ErrorKind::Config, kModule,
         "view count " + std::to_string(views) + " exceeds the pattern index width");
  }
  if (prompt_dim == 0) fail(ErrorKind::Config, kModule, "prompt dimension must be positive");
}
}  // namespace

MissingPattern::MissingPattern(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto& b : bits_) {
    if (b > 1) fail(ErrorKind::Validation, kModule, "pattern bits must be 0 or 1");
  }
}

MissingPattern MissingPattern::from_index(std::uint64_t index, std::size_t views) {
  std::vector<std::uint8_t> bits(views);
  for (std::size_t v = 0; v < views; ++v) bits[v] = static_cast<std::uint8_t>((index >> v) & 1u);
  return MissingPattern(std::move(bits));
}

MissingPattern MissingPattern::all_observed(std::size_t views) {
  return MissingPattern(std::vector<std::uint8_t>(views, 1));
}

std::uint64_t MissingPattern::index() const noexcept {
  std::uint64_t idx = 0;
  for (std::size_t v = 0; v < bits_.size(); ++v) idx |= std::uint64_t{bits_[v]} << v;
  return idx;
}

std::size_t MissingPattern::observed_count() const noexcept {
  return static_cast<std::size_t>(std::accumulate(bits_.begin(), bits_.end(), 0));
}

std::string MissingPattern::to_string() const {
  std::string s;
  s.reserve(bits_.size());
  for (auto b : bits_) s.push_back(b ? '1' : '0');
  return s;
}

void require_sample_indicator(const MissingPattern& pattern) {
  if (!pattern.any_observed()) {
    fail(ErrorKind::Validation, kModule,
         "all-missing pattern " + pattern.to_string() + " is not a valid sample indicator");
  }
}

const char* to_string(BankKind kind) noexcept {
  switch (kind) {
    case BankKind::Ept: return "ept";
    case BankKind::Dense: return "map";
    case BankKind::PerView: return "msp";
  }
  return "unknown";
}

BankKind parse_bank_kind(const std::string& name) {
  if (name == "ept") return BankKind::Ept;
  if (name == "map" || name == "dense") return BankKind::Dense;
  if (name == "msp" || name == "per_view") return BankKind::PerView;
  fail(ErrorKind::Config, kModule, "unknown prompt bank '" + name + "' (expected ept, map or msp)");
}

Matrix PromptBank::materialize_all(std::uint64_t budget) const {
  const std::uint64_t count = std::uint64_t{1} << views();
  if (count * prompt_dim() > budget) {
    fail(ErrorKind::Capacity, kModule,
         "materializing " + std::to_string(count) + " patterns x d=" +
             std::to_string(prompt_dim()) + " exceeds the budget of " + std::to_string(budget) +
             " values; subsample patterns instead");
  }
  Matrix all(prompt_dim(), static_cast<std::size_t>(count));
  for (std::uint64_t j = 0; j < count; ++j) {
    const Matrix column = prompt(MissingPattern::from_index(j, views()));
    for (std::size_t r = 0; r < column.rows(); ++r) all(r, j) = column[r];
  }
  return all;
}

void PromptBank::check_pattern(const MissingPattern& pattern) const {
  if (pattern.views() != views()) {
    fail(ErrorKind::Shape, kModule,
         "pattern length " + std::to_string(pattern.views()) + " does not match bank view count " +
             std::to_string(views()));
  }
}

void PromptBank::check_upstream(std::span<const double> upstream) const {
  if (upstream.size() != prompt_dim()) {
    fail(ErrorKind::Shape, kModule,
         "upstream length " + std::to_string(upstream.size()) + " does not match d=" +
             std::to_string(prompt_dim()));
  }
}

// ---------------------------------------------------------------- EptBank

EptBank::EptBank(std::size_t views, std::size_t prompt_dim, std::size_t factors,
                 std::vector<std::size_t> ranks)
    : views_(views), prompt_dim_(prompt_dim), factors_(factors), ranks_(std::move(ranks)) {
  check_dims(views, prompt_dim);
  if (factors == 0) fail(ErrorKind::Config, kModule, "factor count k must be positive");
  if (ranks_.size() != views + 1) {
    fail(ErrorKind::Config, kModule,
         "expected " + std::to_string(views + 1) + " TT ranks r_0..r_n, got " +
             std::to_string(ranks_.size()));
  }
  if (ranks_.front() != 1) fail(ErrorKind::Config, kModule, "boundary rank r_0 must be 1");
  for (std::size_t r : ranks_) {
    if (r == 0) fail(ErrorKind::Config, kModule, "TT ranks must be positive");
  }
  basis_ = ParamTensor("ept.basis", Matrix(prompt_dim, factors));
  cores_.resize(views);
  for (std::size_t l = 0; l < views; ++l) {
    for (std::size_t s = 0; s < 2; ++s) {
      cores_[l][s] = ParamTensor(
          "ept.core" + std::to_string(l + 1) + ".slice" + std::to_string(s),
          Matrix(ranks_[l], ranks_[l + 1]));
    }
  }
  terminal_ = ParamTensor("ept.terminal", Matrix(ranks_.back(), factors));
}

std::vector<std::size_t> EptBank::uniform_ranks(std::size_t views, std::size_t rank) {
  std::vector<std::size_t> ranks(views + 1, rank);
  ranks[0] = 1;
  return ranks;
}

void EptBank::initialize(Rng& rng) {
  basis_.value = init_uniform_fan_in(prompt_dim_, factors_, factors_, rng);
  for (auto& core : cores_) {
    for (auto& slice : core) {
      slice.value = init_normal(slice.value.rows(), slice.value.cols(), kPromptInitStd, rng);
    }
  }
  terminal_.value = init_normal(terminal_.value.rows(), terminal_.value.cols(), kPromptInitStd, rng);
}

void EptBank::validate_chain() const {
  for (std::size_t l = 0; l < views_; ++l) {
    for (std::size_t s = 0; s < 2; ++s) {
      const Matrix& g = cores_[l][s].value;
      if (g.rows() != ranks_[l] || g.cols() != ranks_[l + 1]) {
        fail(ErrorKind::Config, kModule,
             "core " + std::to_string(l + 1) + " slice " + std::to_string(s) + " has shape " +
                 g.shape_string() + ", chain expects (" + std::to_string(ranks_[l]) + "x" +
                 std::to_string(ranks_[l + 1]) + ")");
      }
    }
  }
  if (terminal_.value.rows() != ranks_.back() || terminal_.value.cols() != factors_) {
    fail(ErrorKind::Config, kModule,
         "terminal core has shape " + terminal_.value.shape_string() + ", chain expects (" +
             std::to_string(ranks_.back()) + "x" + std::to_string(factors_) + ")");
  }
  if (basis_.value.rows() != prompt_dim_ || basis_.value.cols() != factors_) {
    fail(ErrorKind::Config, kModule, "basis has shape " + basis_.value.shape_string());
  }
}

Matrix EptBank::coefficients(const MissingPattern& pattern) const {
  check_pattern(pattern);
  validate_chain();
  Matrix chain(1, 1, 1.0);
  for (std::size_t l = 0; l < views_; ++l) {
    chain = matmul(chain, cores_[l][pattern.observed(l) ? 1 : 0].value);
  }
  return matmul(chain, terminal_.value);
}

Matrix EptBank::prompt(const MissingPattern& pattern) const {
  return matmul_nt(basis_.value, coefficients(pattern));
}

EptBank::Gradients EptBank::backward(const MissingPattern& pattern,
                                     std::span<const double> upstream) const {
  check_pattern(pattern);
  check_upstream(upstream);
  validate_chain();

  // left[l] = G_1(m_1)...G_l(m_l) (1 x r_l), left[0] = [1].
  std::vector<Matrix> left(views_ + 1);
  left[0] = Matrix(1, 1, 1.0);
  for (std::size_t l = 0; l < views_; ++l) {
    left[l + 1] = matmul(left[l], cores_[l][pattern.observed(l) ? 1 : 0].value);
  }
  // right[l] = G_{l+1}(m_{l+1})...G_n(m_n) G_{n+1} (r_l x k), right[n] = terminal.
  std::vector<Matrix> right(views_ + 1);
  right[views_] = terminal_.value;
  for (std::size_t l = views_; l-- > 0;) {
    right[l] = matmul(cores_[l][pattern.observed(l) ? 1 : 0].value, right[l + 1]);
  }
  const Matrix beta = matmul(left[views_], terminal_.value);  // 1 x k
  const Matrix up = Matrix::column(upstream);                 // d x 1
  const Matrix beta_grad = matmul_tn(up, basis_.value);       // 1 x k, (A^T u)^T

  Gradients g;
  g.basis = matmul(up, beta);  // u beta
  g.terminal = matmul_tn(left[views_], beta_grad);
  g.cores.resize(views_);
  const Matrix right_pull = beta_grad;  // 1 x k
  for (std::size_t l = 0; l < views_; ++l) {
    const std::size_t selected = pattern.observed(l) ? 1 : 0;
    g.cores[l][1 - selected] = Matrix(ranks_[l], ranks_[l + 1]);
    // d/dG_l = left[l]^T (beta_grad right[l+1]^T)
    g.cores[l][selected] = matmul_tn(left[l], matmul_nt(right_pull, right[l + 1]));
  }
  return g;
}

void EptBank::accumulate_grad(const MissingPattern& pattern, std::span<const double> upstream) {
  const Gradients g = backward(pattern, upstream);
  if (basis_.updatable()) axpy(basis_.grad, g.basis);
  if (terminal_.updatable()) axpy(terminal_.grad, g.terminal);
  for (std::size_t l = 0; l < views_; ++l) {
    for (std::size_t s = 0; s < 2; ++s) {
      if (cores_[l][s].updatable()) axpy(cores_[l][s].grad, g.cores[l][s]);
    }
  }
}

std::vector<ParamTensor*> EptBank::parameters() {
  std::vector<ParamTensor*> out{&basis_};
  for (auto& core : cores_) {
    out.push_back(&core[0]);
    out.push_back(&core[1]);
  }
  out.push_back(&terminal_);
  return out;
}

std::vector<const ParamTensor*> EptBank::parameters() const {
  std::vector<const ParamTensor*> out{&basis_};
  for (const auto& core : cores_) {
    out.push_back(&core[0]);
    out.push_back(&core[1]);
  }
  out.push_back(&terminal_);
  return out;
}

std::unique_ptr<PromptBank> EptBank::clone() const { return std::make_unique<EptBank>(*this); }

std::uint64_t EptBank::element_count() const noexcept {
  std::uint64_t total = 0;
  for (const ParamTensor* p : parameters()) total += p->value.size();
  return total;
}

// -------------------------------------------------------------- DenseBank

DenseBank::DenseBank(std::size_t views, std::size_t prompt_dim) : views_(views) {
  check_dims(views, prompt_dim);
  const std::uint64_t count = std::uint64_t{1} << views;
  if (count * prompt_dim > kMaterializeBudget) {
    fail(ErrorKind::Capacity, kModule,
         "dense bank with " + std::to_string(count) + " patterns x d=" +
             std::to_string(prompt_dim) + " exceeds the materialization budget");
  }
  table_ = ParamTensor("map.table", Matrix(prompt_dim, static_cast<std::size_t>(count)));
}

void DenseBank::initialize(Rng& rng) {
  table_.value = init_normal(table_.value.rows(), table_.value.cols(), kPromptInitStd, rng);
}

Matrix DenseBank::prompt(const MissingPattern& pattern) const {
  check_pattern(pattern);
  const std::size_t col = static_cast<std::size_t>(pattern.index());
  Matrix out(prompt_dim(), 1);
  for (std::size_t r = 0; r < out.rows(); ++r) out[r] = table_.value(r, col);
  return out;
}

void DenseBank::accumulate_grad(const MissingPattern& pattern, std::span<const double> upstream) {
  check_pattern(pattern);
  check_upstream(upstream);
  if (!table_.updatable()) return;
  const std::size_t col = static_cast<std::size_t>(pattern.index());
  for (std::size_t r = 0; r < upstream.size(); ++r) table_.grad(r, col) += upstream[r];
}

std::vector<ParamTensor*> DenseBank::parameters() { return {&table_}; }
std::vector<const ParamTensor*> DenseBank::parameters() const { return {&table_}; }
std::unique_ptr<PromptBank> DenseBank::clone() const { return std::make_unique<DenseBank>(*this); }

// ------------------------------------------------------------ PerViewBank

PerViewBank::PerViewBank(std::size_t views, std::size_t prompt_dim) : prompt_dim_(prompt_dim) {
  check_dims(views, prompt_dim);
  prompts_.reserve(views);
  for (std::size_t v = 0; v < views; ++v) {
    prompts_.emplace_back("msp.view" + std::to_string(v), Matrix(prompt_dim, 1));
  }
}

void PerViewBank::initialize(Rng& rng) {
  for (auto& p : prompts_) p.value = init_normal(prompt_dim_, 1, kPromptInitStd, rng);
}

Matrix PerViewBank::prompt(const MissingPattern& pattern) const {
  check_pattern(pattern);
  Matrix out(prompt_dim_, 1);
  for (std::size_t v = 0; v < prompts_.size(); ++v) {
    if (pattern.observed(v)) axpy(out, prompts_[v].value);
  }
  return out;
}

void PerViewBank::accumulate_grad(const MissingPattern& pattern,
                                  std::span<const double> upstream) {
  check_pattern(pattern);
  check_upstream(upstream);
  for (std::size_t v = 0; v < prompts_.size(); ++v) {
    if (!pattern.observed(v) || !prompts_[v].updatable()) continue;
    for (std::size_t r = 0; r < prompt_dim_; ++r) prompts_[v].grad[r] += upstream[r];
  }
}

std::vector<ParamTensor*> PerViewBank::parameters() {
  std::vector<ParamTensor*> out;
  for (auto& p : prompts_) out.push_back(&p);
  return out;
}

std::vector<const ParamTensor*> PerViewBank::parameters() const {
  std::vector<const ParamTensor*> out;
  for (const auto& p : prompts_) out.push_back(&p);
  return out;
}

std::unique_ptr<PromptBank> PerViewBank::clone() const {
  return std::make_unique<PerViewBank>(*this);
}

// --------------------------------------------------------------- accounting

const char* to_string(CountKind kind) noexcept {
  switch (kind) {
    case CountKind::Ept: return "EPT";
    case CountKind::Map: return "MAP";
    case CountKind::Msp: return "MSP";
    case CountKind::EpeP: return "EPE-P";
  }
  return "unknown";
}

ParamCount param_count(CountKind kind, std::size_t views, std::size_t prompt_dim,
                       std::size_t factors, std::size_t max_rank,
                       std::span<const std::size_t> ranks) {
  const std::uint64_t n = views, d = prompt_dim, k = factors, r = max_rank;
  ParamCount out;
  switch (kind) {
    case CountKind::Map:
      out.count = out.bound = (std::uint64_t{1} << n) * d;
      out.formula = "(2^n)*d";
      break;
    case CountKind::Msp:
      out.count = out.bound = n * d;
      out.formula = "n*d";
      break;
    case CountKind::EpeP:
      out.count = out.bound = n * n * n + d * r;
      out.formula = "n^3+d*r";
      break;
    case CountKind::Ept: {
      std::vector<std::size_t> chain(ranks.begin(), ranks.end());
      if (chain.empty()) chain = EptBank::uniform_ranks(views, max_rank);
      if (chain.size() != views + 1) {
        fail(ErrorKind::Config, kModule, "rank list must hold r_0..r_n");
      }
      std::uint64_t exact = 0;
      for (std::size_t l = 1; l <= views; ++l) exact += chain[l - 1] * 2 * chain[l];
      exact += chain.back() * k + d * k;
      out.count = exact;
      out.bound = n * r * r * k + d * k;
      out.formula = "n*R^2*k+d*k";
      break;
    }
  }
  return out;
}

std::unique_ptr<PromptBank> make_bank(BankKind kind, std::size_t views, std::size_t prompt_dim,
                                      std::size_t factors, std::vector<std::size_t> ranks) {
  switch (kind) {
    case BankKind::Ept:
      return std::make_unique<EptBank>(views, prompt_dim, factors, std::move(ranks));
    case BankKind::Dense:
      return std::make_unique<DenseBank>(views, prompt_dim);
    case BankKind::PerView:
      return std::make_unique<PerViewBank>(views, prompt_dim);
  }
  fail(ErrorKind::Internal, kModule, "unhandled bank kind");
}

}  // namespace ttprompt
