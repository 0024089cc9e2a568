// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "ttprompt/dcl.hpp"
#include "ttprompt/ept.hpp"
#include "ttprompt/numcore.hpp"

namespace ttprompt {

/// Architecture hyperparameters. The model width is prompt_dim / 2 because
/// each prompt half is added directly to the key or value rows.
struct ModelDims {
  std::vector<std::size_t> view_dims;
  std::size_t prompt_dim = 128;
  std::size_t layers = 3;
  std::size_t heads = 4;
  std::size_t factors = 4;
  /// r_0..r_n; empty means r_0 = 1 and r_1..r_n = 2.
  std::vector<std::size_t> tt_ranks;
  BankKind bank = BankKind::Ept;

  std::size_t views() const noexcept { return view_dims.size(); }
  std::size_t model_dim() const noexcept { return prompt_dim / 2; }
  std::vector<std::size_t> resolved_ranks() const;
  void validate() const;
};

/// y = W x + b with W stored out x in.
struct Linear {
  ParamTensor weight;
  ParamTensor bias;
};

/// One pre-norm transformer layer. Weights are stored in x out (rows times W).
struct LayerWeights {
  ParamTensor ln1_gamma, ln1_beta;
  ParamTensor qkv_weight, qkv_bias;
  ParamTensor out_weight, out_bias;
  ParamTensor ln2_gamma, ln2_beta;
  ParamTensor mlp_in_weight, mlp_in_bias;
  ParamTensor mlp_out_weight, mlp_out_bias;

  std::vector<ParamTensor*> parameters();
  std::vector<const ParamTensor*> parameters() const;
};

struct Backbone {
  ParamTensor cls;  // 1 x D
  std::vector<LayerWeights> layers;
  std::size_t heads = 1;
};

struct TaskSlot {
  std::size_t classes = 0;
  ParamTensor prompt;  // d x 1
  Linear head;         // classes x D, classes x 1
};

/// Non-owning view of one sample. Feature spans for missing views are read
/// as zeros regardless of their contents.
struct SampleView {
  std::vector<std::span<const double>> features;
  MissingPattern pattern;
};

/// Splits a d-vector into its key half (first d/2) and value half.
std::pair<Matrix, Matrix> split_prompt(const Matrix& prompt);

struct LayerCache {
  Matrix input;
  Matrix ln1_hat, ln1_out;
  std::vector<double> ln1_inv_std;
  Matrix q, k, v;  // k and v include the injected prompt halves
  std::vector<Matrix> attention;  // per head, L x L
  Matrix context;
  Matrix residual;  // input + attention output
  Matrix ln2_hat, ln2_out;
  std::vector<double> ln2_inv_std;
  Matrix mlp_pre, mlp_act;
  Matrix output;
};

struct ForwardTrace {
  std::vector<Matrix> view_embeddings;  // n columns of length D
  Matrix sequence;                      // (n+1) x D
  Matrix prompt;                        // combined d x 1 prompt
  std::vector<LayerCache> layers;
};

struct ForwardResult {
  Matrix z;       // D x 1, CLS row of the last layer
  Matrix logits;  // C_t x 1
  Matrix probs;
};

struct ForwardOptions {
  bool zero_missing_aware = false;
  bool zero_task_prompt = false;
};

/// Encoders, frozen backbone, prompt bank, DCL view weights, and the per-task
/// prompts and heads.
class PromptModel {
 public:
  /// Backbone and trainable weights ~ U(+-1/sqrt(fan_in)); prompts and TT
  /// cores ~ N(0, 0.02^2); view weights start at 0. The backbone is frozen.
  PromptModel(ModelDims dims, Rng& rng);
  /// Uninitialized (all-zero) parameters with the same shapes; for loading.
  explicit PromptModel(ModelDims dims);

  PromptModel(const PromptModel& other);
  PromptModel& operator=(const PromptModel& other);
  PromptModel(PromptModel&&) noexcept = default;
  PromptModel& operator=(PromptModel&&) noexcept = default;

  const ModelDims& dims() const noexcept { return dims_; }

  std::size_t add_task(std::size_t classes, Rng& rng);
  std::size_t task_count() const noexcept { return tasks_.size(); }
  TaskSlot& task(std::size_t index) { return tasks_.at(index); }
  const TaskSlot& task(std::size_t index) const { return tasks_.at(index); }

  std::vector<Linear>& encoders() noexcept { return encoders_; }
  const std::vector<Linear>& encoders() const noexcept { return encoders_; }
  Backbone& backbone() noexcept { return backbone_; }
  const Backbone& backbone() const noexcept { return backbone_; }
  PromptBank& bank() noexcept { return *bank_; }
  const PromptBank& bank() const noexcept { return *bank_; }
  ParamTensor& view_weights() noexcept { return view_weights_; }
  const ParamTensor& view_weights() const noexcept { return view_weights_; }

  /// h_v = W_v x_v + b_v per view; missing views encode the zero vector.
  std::vector<Matrix> encode_views(const SampleView& sample) const;
  /// Row 0 is the CLS embedding, rows 1..n the view embeddings in order.
  Matrix build_sequence(std::span<const Matrix> embeddings) const;

  /// Combined missing-aware + task prompt used by forward_task.
  Matrix combined_prompt(const MissingPattern& pattern, std::size_t task,
                         const ForwardOptions& options = {}) const;

  ForwardResult forward_task(const SampleView& sample, std::size_t task,
                             const ForwardOptions& options = {}) const;
  /// Forward with an explicit d x 1 prompt; fills `trace` when given.
  ForwardResult forward_with_prompt(const SampleView& sample, std::size_t task,
                                    const Matrix& prompt, ForwardTrace* trace = nullptr) const;
  /// Backbone only, no prompt injection at all.
  ForwardResult forward_plain(const SampleView& sample, std::size_t task) const;

  /// Every parameter in a stable order: encoders, backbone, bank, view
  /// weights, tasks.
  std::vector<ParamTensor*> parameters();
  std::vector<const ParamTensor*> parameters() const;
  ParamTensor* find_parameter(const std::string& name);

  void zero_grad();

 private:
  void build_shapes();
  void validate_sample(const SampleView& sample) const;

  ModelDims dims_;
  std::vector<Linear> encoders_;
  Backbone backbone_;
  std::unique_ptr<PromptBank> bank_;
  ParamTensor view_weights_;
  std::vector<TaskSlot> tasks_;
};

/// Runs one layer. Exposed for tests.
Matrix layer_forward(const LayerWeights& layer, std::size_t heads, const Matrix& input,
                     std::span<const double> prompt_k, std::span<const double> prompt_v,
                     LayerCache* cache);

struct LayerGrads {
  Matrix input;              // L x D
  std::vector<double> prompt_k;  // D
  std::vector<double> prompt_v;  // D
};

LayerGrads layer_backward(const LayerWeights& layer, std::size_t heads, const LayerCache& cache,
                          const Matrix& output_grad);

inline constexpr double kProbClamp = 1e-7;

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
double bce_loss(const Matrix& probs, const Matrix& labels);

struct BceResult {
  double loss = 0.0;
  Matrix logits_grad;
};

/// BCE on sigmoid(logits) and its gradient w.r.t. the logits. `normalizer`
/// divides the summed loss (defaults to the element count).
BceResult bce_with_logits(const Matrix& logits, const Matrix& labels, double normalizer = 0.0);

inline double total_loss(double bce, double dcl, double lambda) { return bce + lambda * dcl; }

struct LabeledSample {
  SampleView sample;
  Matrix labels;  // C_t x 1, restricted to the task's classes
};

struct LossOptions {
  double lambda = 0.001;
  DclOptions dcl;
  /// Patterns per step when the full bank exceeds the materialization budget.
  std::size_t dcl_pattern_subsample = 128;
  std::uint64_t dcl_seed = 0;
  /// Forces both prompts to zero (ablation control).
  bool ablate_prompts = false;
};

struct LossBreakdown {
  double total = 0.0;
  double bce = 0.0;
  double dcl = 0.0;
};

/// Loss of one batch for task `task`. When `accumulate` is set, adds the
/// gradient of the total loss into every updatable parameter's grad (caller
/// zeroes them). Frozen parameters are never written.
LossBreakdown backward_step(PromptModel& model, std::span<const LabeledSample> batch,
                            std::size_t task, const LossOptions& options, bool accumulate = true);

/// The patterns entering the contrastive term for a batch: every valid
/// pattern when the bank fits the budget, otherwise the batch patterns plus a
/// uniform subsample.
std::vector<MissingPattern> dcl_patterns(const PromptBank& bank,
                                         std::span<const LabeledSample> batch,
                                         std::size_t subsample, std::uint64_t seed);

}  // namespace ttprompt
