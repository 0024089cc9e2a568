// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttprompt/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ttprompt/error.hpp"

namespace ttprompt {

namespace {
constexpr const char* kModule = "numcore";

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    fail(ErrorKind::Shape, kModule,
         std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

inline std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }
}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    fail(ErrorKind::Shape, kModule,
         "data length " + std::to_string(data_.size()) + " does not match " +
             std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) fail(ErrorKind::Shape, kModule, "ragged initializer rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::shape_string() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorKind::Shape, kModule,
         "matmul: inner dimensions differ " + a.shape_string() + " x " + b.shape_string());
  }
  const std::size_t n = a.rows(), m = b.cols(), inner = a.cols();
  Matrix out(n, m);
  // i-k-j order: each output element still sums k = 0..inner-1 in order.
  for (std::size_t i = 0; i < n; ++i) {
    double* out_row = &out(i, 0);
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = a(i, k);
      const double* b_row = b.row(k).data();
      for (std::size_t j = 0; j < m; ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    fail(ErrorKind::Shape, kModule,
         "matmul_nt: inner dimensions differ " + a.shape_string() + " x " + b.shape_string() +
             "^T");
  }
  const std::size_t n = a.rows(), m = b.rows(), inner = a.cols();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* a_row = a.row(i).data();
    for (std::size_t j = 0; j < m; ++j) {
      const double* b_row = b.row(j).data();
      double acc = 0.0;
      for (std::size_t k = 0; k < inner; ++k) acc += a_row[k] * b_row[k];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    fail(ErrorKind::Shape, kModule,
         "matmul_tn: inner dimensions differ " + a.shape_string() + "^T x " + b.shape_string());
  }
  const std::size_t n = a.cols(), m = b.cols(), inner = a.rows();
  Matrix out(n, m);
  for (std::size_t k = 0; k < inner; ++k) {
    const double* a_row = a.row(k).data();
    const double* b_row = b.row(k).data();
    for (std::size_t i = 0; i < n; ++i) {
      const double aki = a_row[i];
      double* out_row = &out(i, 0);
      for (std::size_t j = 0; j < m; ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

void axpy(Matrix& a, const Matrix& b, double scale) {
  require_same_shape(a, b, "axpy");
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += scale * bv[i];
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  axpy(out, b);
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Matrix scaled(const Matrix& a, double scale) {
  Matrix out = a;
  for (double& v : out.values()) v *= scale;
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::Shape, kModule,
         "dot: length mismatch " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double frobenius_norm(const Matrix& a) { return std::sqrt(dot(a.values(), a.values())); }

bool all_finite(const Matrix& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix sigmoid(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.values()) v = sigmoid(v);
  return out;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto in = x.row(r);
    auto dst = out.row(r);
    const double peak = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      dst[c] = std::exp(in[c] - peak);
      total += dst[c];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t s = seed;
  for (auto& word : state_) word = splitmix64(s);
}

std::uint64_t Rng::next_u64() noexcept {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

double Rng::normal(double mean, double stddev) noexcept {
  // 1 - u keeps the logarithm argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * radius * std::cos(2.0 * M_PI * u2);
}

std::uint64_t Rng::below(std::uint64_t bound) noexcept {
  if (bound <= 1) return 0;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

Rng Rng::fork(std::uint64_t purpose) const noexcept {
  std::uint64_t s = seed_ ^ (purpose * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL);
  return Rng(splitmix64(s));
}

ParamTensor::ParamTensor(std::string name, Matrix value, bool trainable)
    : name(std::move(name)),
      value(std::move(value)),
      trainable(trainable),
      frozen(!trainable) {
  grad = Matrix(this->value.rows(), this->value.cols());
  reset_optimizer_state();
}

void ParamTensor::zero_grad() {
  if (!grad.same_shape(value)) grad = Matrix(value.rows(), value.cols());
  grad.fill(0.0);
}

void ParamTensor::reset_optimizer_state() {
  adam_m = Matrix(value.rows(), value.cols());
  adam_v = Matrix(value.rows(), value.cols());
}

void adam_step(std::span<ParamTensor* const> params, const AdamOptions& options, std::size_t step) {
  if (step == 0) fail(ErrorKind::Internal, kModule, "adam_step: step is 1-based");
  const double bias1 = 1.0 - std::pow(options.beta1, static_cast<double>(step));
  const double bias2 = 1.0 - std::pow(options.beta2, static_cast<double>(step));
  for (ParamTensor* p : params) {
    if (!p->updatable()) continue;
    if (!p->grad.same_shape(p->value)) {
      fail(ErrorKind::Internal, kModule,
           "adam_step: gradient of '" + p->name + "' has shape " + p->grad.shape_string() +
               ", value has " + p->value.shape_string());
    }
    if (!p->adam_m.same_shape(p->value)) p->reset_optimizer_state();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      double& m = p->adam_m[i];
      double& v = p->adam_v[i];
      m = options.beta1 * m + (1.0 - options.beta1) * g;
      v = options.beta2 * v + (1.0 - options.beta2) * g * g;
      const double m_hat = m / bias1;
      const double v_hat = v / bias2;
      p->value[i] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& loss, const Matrix& at,
                        double h) {
  if (!(h > 0.0)) fail(ErrorKind::Config, kModule, "finite_diff_grad: step must be positive");
  Matrix probe = at;
  Matrix grad(at.rows(), at.cols());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + h;
    const double up = loss(probe);
    probe[i] = original - h;
    const double down = loss(probe);
    probe[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      fail(ErrorKind::Numeric, kModule, "finite_diff_grad: non-finite loss");
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

Matrix finite_diff_grad(const std::function<double()>& loss, ParamTensor& param, double h) {
  if (!(h > 0.0)) fail(ErrorKind::Config, kModule, "finite_diff_grad: step must be positive");
  Matrix grad(param.value.rows(), param.value.cols());
  for (std::size_t i = 0; i < param.value.size(); ++i) {
    const double original = param.value[i];
    param.value[i] = original + h;
    const double up = loss();
    param.value[i] = original - h;
    const double down = loss();
    param.value[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      fail(ErrorKind::Numeric, kModule,
           "finite_diff_grad: non-finite loss while probing '" + param.name + "'");
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

Matrix init_uniform_fan_in(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return m;
}

Matrix init_normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal(0.0, stddev);
  return m;
}

}  // namespace ttprompt
