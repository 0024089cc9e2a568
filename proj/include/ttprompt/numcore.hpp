// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ttprompt {

/// Dense row-major matrix of doubles. Column vectors are rows x 1.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix column(std::span<const double> values);
  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;
  void fill(double value);

  /// Elementwise equality (bitwise for finite values).
  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Products accumulate row-major, left to right over the inner index.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

/// a += scale * b
void axpy(Matrix& a, const Matrix& b, double scale = 1.0);
Matrix add(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& a, double scale);
double dot(std::span<const double> a, std::span<const double> b);
double frobenius_norm(const Matrix& a);
bool all_finite(const Matrix& a);

double sigmoid(double x);
Matrix sigmoid(const Matrix& x);
/// Row-wise softmax, stabilized by subtracting the row maximum.
Matrix softmax_rows(const Matrix& x);

/// xoshiro256** seeded through splitmix64.
///
/// Streams are derived with fork(purpose): the child seed is splitmix64 of
/// (seed XOR golden-ratio-scrambled purpose), so every consumer draws from an
/// independent stream regardless of how many values other consumers drew.
/// Normal variates use Box-Muller on two uniform draws; no libstdc++
/// distributions are involved so streams are identical across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  double normal(double mean = 0.0, double stddev = 1.0) noexcept;
  /// Uniform integer in [0, bound), rejection-sampled.
  std::uint64_t below(std::uint64_t bound) noexcept;
  Rng fork(std::uint64_t purpose) const noexcept;

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// A named parameter with gradient and Adam moment buffers.
///
/// `trainable` marks parameters that can ever be learned (backbone weights
/// are not); `frozen` is the current session's switch. Optimizers only touch
/// parameters that are trainable and not frozen.
struct ParamTensor {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;
  bool trainable = true;
  bool frozen = false;

  ParamTensor() = default;
  ParamTensor(std::string name, Matrix value, bool trainable = true);

  bool updatable() const noexcept { return trainable && !frozen; }
  void zero_grad();
  void reset_optimizer_state();
};

struct AdamOptions {
  double lr = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam update for every updatable parameter. `step` is 1-based.
void adam_step(std::span<ParamTensor* const> params, const AdamOptions& options, std::size_t step);

/// Central-difference gradient of `loss` around `at`.
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& loss, const Matrix& at,
                        double h = 1e-5);

/// Same, perturbing `param.value` in place and restoring it afterwards; for
/// losses that read the parameter through a model.
Matrix finite_diff_grad(const std::function<double()>& loss, ParamTensor& param, double h = 1e-5);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Matrix init_uniform_fan_in(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng);
Matrix init_normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

}  // namespace ttprompt
