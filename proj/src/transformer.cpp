// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttprompt/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ttprompt/error.hpp"

namespace ttprompt {

namespace {
constexpr const char* kModule = "prompt_transformer";
constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluCubic = 0.044715;
constexpr double kPromptInitStd = 0.02;

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, Matrix& hat,
                  std::vector<double>& inv_std) {
  const std::size_t rows = x.rows(), cols = x.cols();
  hat = Matrix(rows, cols);
  inv_std.assign(rows, 0.0);
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto in = x.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[r] = inv;
    for (std::size_t c = 0; c < cols; ++c) {
      hat(r, c) = (in[c] - mean) * inv;
      out(r, c) = gamma[c] * hat(r, c) + beta[c];
    }
  }
  return out;
}

Matrix layer_norm_backward(const Matrix& out_grad, const Matrix& hat,
                           const std::vector<double>& inv_std, const Matrix& gamma) {
  const std::size_t rows = out_grad.rows(), cols = out_grad.cols();
  Matrix in_grad(rows, cols);
  std::vector<double> hat_grad(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean_g = 0.0, mean_gh = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      hat_grad[c] = out_grad(r, c) * gamma[c];
      mean_g += hat_grad[c];
      mean_gh += hat_grad[c] * hat(r, c);
    }
    mean_g /= static_cast<double>(cols);
    mean_gh /= static_cast<double>(cols);
    for (std::size_t c = 0; c < cols; ++c) {
      in_grad(r, c) = inv_std[r] * (hat_grad[c] - mean_g - hat(r, c) * mean_gh);
    }
  }
  return in_grad;
}

void add_row_bias(Matrix& m, const Matrix& bias) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

double gelu(double u) {
  return 0.5 * u * (1.0 + std::tanh(kGeluScale * (u + kGeluCubic * u * u * u)));
}

double gelu_grad(double u) {
  const double t = std::tanh(kGeluScale * (u + kGeluCubic * u * u * u));
  return 0.5 * (1.0 + t) +
         0.5 * u * (1.0 - t * t) * kGeluScale * (1.0 + 3.0 * kGeluCubic * u * u);
}

ParamTensor frozen_param(std::string name, Matrix value) {
  return ParamTensor(std::move(name), std::move(value), /*trainable=*/false);
}

void require_task(std::size_t task, std::size_t count) {
  if (task >= count) {
    fail(ErrorKind::Validation, kModule,
         "unknown task " + std::to_string(task + 1) + " (" + std::to_string(count) +
             " registered)");
  }
}
}  // namespace

// ---------------------------------------------------------------- ModelDims

std::vector<std::size_t> ModelDims::resolved_ranks() const {
  if (!tt_ranks.empty()) return tt_ranks;
  return EptBank::uniform_ranks(views(), 2);
}

void ModelDims::validate() const {
  if (view_dims.empty()) fail(ErrorKind::Config, kModule, "at least one view is required");
  for (std::size_t v = 0; v < view_dims.size(); ++v) {
    if (view_dims[v] == 0) {
      fail(ErrorKind::Config, kModule, "view " + std::to_string(v) + " has zero feature length");
    }
  }
  if (prompt_dim == 0 || prompt_dim % 2 != 0) {
    fail(ErrorKind::Config, kModule,
         "prompt dimension d=" + std::to_string(prompt_dim) + " must be positive and even");
  }
  if (layers == 0) fail(ErrorKind::Config, kModule, "layer count must be positive");
  if (heads == 0 || model_dim() % heads != 0) {
    fail(ErrorKind::Config, kModule,
         "model width " + std::to_string(model_dim()) + " is not divisible by " +
             std::to_string(heads) + " heads");
  }
  if (factors == 0) fail(ErrorKind::Config, kModule, "factor count k must be positive");
}

// ------------------------------------------------------------ LayerWeights

std::vector<ParamTensor*> LayerWeights::parameters() {
  return {&ln1_gamma,   &ln1_beta,     &qkv_weight,    &qkv_bias,
          &out_weight,  &out_bias,     &ln2_gamma,     &ln2_beta,
          &mlp_in_weight, &mlp_in_bias, &mlp_out_weight, &mlp_out_bias};
}

std::vector<const ParamTensor*> LayerWeights::parameters() const {
  return {&ln1_gamma,   &ln1_beta,     &qkv_weight,    &qkv_bias,
          &out_weight,  &out_bias,     &ln2_gamma,     &ln2_beta,
          &mlp_in_weight, &mlp_in_bias, &mlp_out_weight, &mlp_out_bias};
}

std::pair<Matrix, Matrix> split_prompt(const Matrix& prompt) {
  if (prompt.size() % 2 != 0) {
    fail(ErrorKind::Config, kModule,
         "cannot split a prompt of odd length " + std::to_string(prompt.size()));
  }
  const std::size_t half = prompt.size() / 2;
  Matrix key(half, 1), value(half, 1);
  for (std::size_t i = 0; i < half; ++i) {
    key[i] = prompt[i];
    value[i] = prompt[half + i];
  }
  return {std::move(key), std::move(value)};
}

// -------------------------------------------------------------- the layer

Matrix layer_forward(const LayerWeights& layer, std::size_t heads, const Matrix& input,
                     std::span<const double> prompt_k, std::span<const double> prompt_v,
                     LayerCache* cache) {
  const std::size_t len = input.rows(), width = input.cols();
  const std::size_t head_dim = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  LayerCache c;
  c.input = input;
  c.ln1_out = layer_norm(input, layer.ln1_gamma.value, layer.ln1_beta.value, c.ln1_hat,
                         c.ln1_inv_std);
  Matrix qkv = matmul(c.ln1_out, layer.qkv_weight.value);
  add_row_bias(qkv, layer.qkv_bias.value);
  c.q = Matrix(len, width);
  c.k = Matrix(len, width);
  c.v = Matrix(len, width);
  for (std::size_t r = 0; r < len; ++r) {
    for (std::size_t j = 0; j < width; ++j) {
      c.q(r, j) = qkv(r, j);
      c.k(r, j) = qkv(r, width + j);
      c.v(r, j) = qkv(r, 2 * width + j);
    }
  }
  // Prompt halves are broadcast-added to every row before the head split.
  if (!prompt_k.empty()) {
    for (std::size_t r = 0; r < len; ++r)
      for (std::size_t j = 0; j < width; ++j) c.k(r, j) += prompt_k[j];
  }
  if (!prompt_v.empty()) {
    for (std::size_t r = 0; r < len; ++r)
      for (std::size_t j = 0; j < width; ++j) c.v(r, j) += prompt_v[j];
  }

  c.context = Matrix(len, width);
  c.attention.resize(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * head_dim;
    Matrix scores(len, len);
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = 0; j < len; ++j) {
        double acc = 0.0;
        for (std::size_t e = 0; e < head_dim; ++e) acc += c.q(i, off + e) * c.k(j, off + e);
        scores(i, j) = acc * scale;
      }
    }
    c.attention[h] = softmax_rows(scores);
    const Matrix& attn = c.attention[h];
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = 0; j < len; ++j) {
        const double a = attn(i, j);
        for (std::size_t e = 0; e < head_dim; ++e) c.context(i, off + e) += a * c.v(j, off + e);
      }
    }
  }
  Matrix attn_out = matmul(c.context, layer.out_weight.value);
  add_row_bias(attn_out, layer.out_bias.value);
  c.residual = add(input, attn_out);

  c.ln2_out = layer_norm(c.residual, layer.ln2_gamma.value, layer.ln2_beta.value, c.ln2_hat,
                         c.ln2_inv_std);
  c.mlp_pre = matmul(c.ln2_out, layer.mlp_in_weight.value);
  add_row_bias(c.mlp_pre, layer.mlp_in_bias.value);
  c.mlp_act = c.mlp_pre;
  for (double& u : c.mlp_act.values()) u = gelu(u);
  Matrix mlp_out = matmul(c.mlp_act, layer.mlp_out_weight.value);
  add_row_bias(mlp_out, layer.mlp_out_bias.value);
  c.output = add(c.residual, mlp_out);

  Matrix out = c.output;
  if (cache) *cache = std::move(c);
  return out;
}

LayerGrads layer_backward(const LayerWeights& layer, std::size_t heads, const LayerCache& c,
                          const Matrix& output_grad) {
  const std::size_t len = c.input.rows(), width = c.input.cols();
  const std::size_t head_dim = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  // output = residual + mlp(ln2(residual))
  Matrix residual_grad = output_grad;
  Matrix act_grad = matmul_nt(output_grad, layer.mlp_out_weight.value);
  Matrix pre_grad = act_grad;
  for (std::size_t i = 0; i < pre_grad.size(); ++i) pre_grad[i] *= gelu_grad(c.mlp_pre[i]);
  const Matrix ln2_grad = matmul_nt(pre_grad, layer.mlp_in_weight.value);
  axpy(residual_grad,
       layer_norm_backward(ln2_grad, c.ln2_hat, c.ln2_inv_std, layer.ln2_gamma.value));

  // residual = input + context W_o + b_o
  Matrix input_grad = residual_grad;
  const Matrix context_grad = matmul_nt(residual_grad, layer.out_weight.value);

  Matrix q_grad(len, width), k_grad(len, width), v_grad(len, width);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * head_dim;
    const Matrix& attn = c.attention[h];
    Matrix attn_grad(len, len);
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = 0; j < len; ++j) {
        double acc = 0.0;
        for (std::size_t e = 0; e < head_dim; ++e) acc += context_grad(i, off + e) * c.v(j, off + e);
        attn_grad(i, j) = acc;
        const double a = attn(i, j);
        for (std::size_t e = 0; e < head_dim; ++e) v_grad(j, off + e) += a * context_grad(i, off + e);
      }
    }
    // softmax backward, row-wise
    for (std::size_t i = 0; i < len; ++i) {
      double inner = 0.0;
      for (std::size_t j = 0; j < len; ++j) inner += attn_grad(i, j) * attn(i, j);
      for (std::size_t j = 0; j < len; ++j) {
        const double score_grad = attn(i, j) * (attn_grad(i, j) - inner) * scale;
        for (std::size_t e = 0; e < head_dim; ++e) {
          q_grad(i, off + e) += score_grad * c.k(j, off + e);
          k_grad(j, off + e) += score_grad * c.q(i, off + e);
        }
      }
    }
  }

  LayerGrads out;
  out.prompt_k.assign(width, 0.0);
  out.prompt_v.assign(width, 0.0);
  Matrix qkv_grad(len, 3 * width);
  for (std::size_t r = 0; r < len; ++r) {
    for (std::size_t j = 0; j < width; ++j) {
      qkv_grad(r, j) = q_grad(r, j);
      qkv_grad(r, width + j) = k_grad(r, j);
      qkv_grad(r, 2 * width + j) = v_grad(r, j);
      out.prompt_k[j] += k_grad(r, j);
      out.prompt_v[j] += v_grad(r, j);
    }
  }
  const Matrix ln1_grad = matmul_nt(qkv_grad, layer.qkv_weight.value);
  axpy(input_grad, layer_norm_backward(ln1_grad, c.ln1_hat, c.ln1_inv_std, layer.ln1_gamma.value));
  out.input = std::move(input_grad);
  return out;
}

// ------------------------------------------------------------- PromptModel

PromptModel::PromptModel(ModelDims dims) : dims_(std::move(dims)) {
  dims_.validate();
  build_shapes();
}

PromptModel::PromptModel(ModelDims dims, Rng& rng) : PromptModel(std::move(dims)) {
  const std::size_t width = dims_.model_dim();
  for (std::size_t v = 0; v < encoders_.size(); ++v) {
    const std::size_t fan_in = dims_.view_dims[v];
    encoders_[v].weight.value = init_uniform_fan_in(width, fan_in, fan_in, rng);
    encoders_[v].bias.value = init_uniform_fan_in(width, 1, fan_in, rng);
  }
  backbone_.cls.value = init_normal(1, width, kPromptInitStd, rng);
  for (auto& layer : backbone_.layers) {
    layer.ln1_gamma.value.fill(1.0);
    layer.ln2_gamma.value.fill(1.0);
    layer.qkv_weight.value = init_uniform_fan_in(width, 3 * width, width, rng);
    layer.qkv_bias.value = init_uniform_fan_in(1, 3 * width, width, rng);
    layer.out_weight.value = init_uniform_fan_in(width, width, width, rng);
    layer.out_bias.value = init_uniform_fan_in(1, width, width, rng);
    layer.mlp_in_weight.value = init_uniform_fan_in(width, 4 * width, width, rng);
    layer.mlp_in_bias.value = init_uniform_fan_in(1, 4 * width, width, rng);
    layer.mlp_out_weight.value = init_uniform_fan_in(4 * width, width, 4 * width, rng);
    layer.mlp_out_bias.value = init_uniform_fan_in(1, width, 4 * width, rng);
  }
  bank_->initialize(rng);
}

void PromptModel::build_shapes() {
  const std::size_t width = dims_.model_dim();
  encoders_.clear();
  for (std::size_t v = 0; v < dims_.views(); ++v) {
    const std::string base = "encoder.view" + std::to_string(v);
    encoders_.push_back(Linear{ParamTensor(base + ".weight", Matrix(width, dims_.view_dims[v])),
                               ParamTensor(base + ".bias", Matrix(width, 1))});
  }
  backbone_.heads = dims_.heads;
  backbone_.cls = frozen_param("backbone.cls", Matrix(1, width));
  backbone_.layers.clear();
  for (std::size_t l = 0; l < dims_.layers; ++l) {
    const std::string base = "backbone.layer" + std::to_string(l);
    LayerWeights w;
    w.ln1_gamma = frozen_param(base + ".ln1.gamma", Matrix(1, width, 1.0));
    w.ln1_beta = frozen_param(base + ".ln1.beta", Matrix(1, width));
    w.qkv_weight = frozen_param(base + ".attn.qkv.weight", Matrix(width, 3 * width));
    w.qkv_bias = frozen_param(base + ".attn.qkv.bias", Matrix(1, 3 * width));
    w.out_weight = frozen_param(base + ".attn.out.weight", Matrix(width, width));
    w.out_bias = frozen_param(base + ".attn.out.bias", Matrix(1, width));
    w.ln2_gamma = frozen_param(base + ".ln2.gamma", Matrix(1, width, 1.0));
    w.ln2_beta = frozen_param(base + ".ln2.beta", Matrix(1, width));
    w.mlp_in_weight = frozen_param(base + ".mlp.in.weight", Matrix(width, 4 * width));
    w.mlp_in_bias = frozen_param(base + ".mlp.in.bias", Matrix(1, 4 * width));
    w.mlp_out_weight = frozen_param(base + ".mlp.out.weight", Matrix(4 * width, width));
    w.mlp_out_bias = frozen_param(base + ".mlp.out.bias", Matrix(1, width));
    backbone_.layers.push_back(std::move(w));
  }
  bank_ = make_bank(dims_.bank, dims_.views(), dims_.prompt_dim, dims_.factors,
                    dims_.resolved_ranks());
  view_weights_ = ParamTensor("dcl.view_weights", Matrix(dims_.views(), 1));
  tasks_.clear();
}

PromptModel::PromptModel(const PromptModel& other)
    : dims_(other.dims_),
      encoders_(other.encoders_),
      backbone_(other.backbone_),
      bank_(other.bank_->clone()),
      view_weights_(other.view_weights_),
      tasks_(other.tasks_) {}

PromptModel& PromptModel::operator=(const PromptModel& other) {
  if (this != &other) {
    PromptModel copy(other);
    *this = std::move(copy);
  }
  return *this;
}

std::size_t PromptModel::add_task(std::size_t classes, Rng& rng) {
  if (classes == 0) fail(ErrorKind::Config, kModule, "a task needs at least one class");
  const std::size_t width = dims_.model_dim();
  const std::string base = "task" + std::to_string(tasks_.size() + 1);
  TaskSlot slot;
  slot.classes = classes;
  slot.prompt = ParamTensor(base + ".prompt", init_normal(dims_.prompt_dim, 1, kPromptInitStd, rng));
  slot.head.weight =
      ParamTensor(base + ".head.weight", init_uniform_fan_in(classes, width, width, rng));
  slot.head.bias = ParamTensor(base + ".head.bias", init_uniform_fan_in(classes, 1, width, rng));
  tasks_.push_back(std::move(slot));
  return tasks_.size() - 1;
}

void PromptModel::validate_sample(const SampleView& sample) const {
  if (sample.features.size() != dims_.views() || sample.pattern.views() != dims_.views()) {
    fail(ErrorKind::Shape, kModule,
         "sample has " + std::to_string(sample.features.size()) + " views and a pattern of " +
             std::to_string(sample.pattern.views()) + ", model expects " +
             std::to_string(dims_.views()));
  }
  require_sample_indicator(sample.pattern);
}

std::vector<Matrix> PromptModel::encode_views(const SampleView& sample) const {
  if (sample.features.size() != dims_.views()) {
    fail(ErrorKind::Shape, kModule,
         "sample has " + std::to_string(sample.features.size()) + " views, model expects " +
             std::to_string(dims_.views()));
  }
  std::vector<Matrix> out;
  out.reserve(dims_.views());
  for (std::size_t v = 0; v < dims_.views(); ++v) {
    const Linear& enc = encoders_[v];
    Matrix h = enc.bias.value;
    if (!sample.pattern.observed(v)) {
      out.push_back(std::move(h));  // zero-imputed input encodes to the bias
      continue;
    }
    const auto x = sample.features[v];
    if (x.size() != dims_.view_dims[v]) {
      fail(ErrorKind::Shape, kModule,
           "view " + std::to_string(v) + " has " + std::to_string(x.size()) +
               " features, encoder expects " + std::to_string(dims_.view_dims[v]));
    }
    for (std::size_t r = 0; r < h.rows(); ++r) h[r] += dot(enc.weight.value.row(r), x);
    out.push_back(std::move(h));
  }
  return out;
}

Matrix PromptModel::build_sequence(std::span<const Matrix> embeddings) const {
  const std::size_t width = dims_.model_dim();
  Matrix seq(embeddings.size() + 1, width);
  for (std::size_t c = 0; c < width; ++c) seq(0, c) = backbone_.cls.value[c];
  for (std::size_t v = 0; v < embeddings.size(); ++v) {
    if (embeddings[v].size() != width) {
      fail(ErrorKind::Shape, kModule,
           "embedding " + std::to_string(v) + " has length " +
               std::to_string(embeddings[v].size()) + ", expected " + std::to_string(width));
    }
    for (std::size_t c = 0; c < width; ++c) seq(v + 1, c) = embeddings[v][c];
  }
  return seq;
}

Matrix PromptModel::combined_prompt(const MissingPattern& pattern, std::size_t task,
                                    const ForwardOptions& options) const {
  require_task(task, tasks_.size());
  Matrix prompt(dims_.prompt_dim, 1);
  if (!options.zero_missing_aware) axpy(prompt, bank_->prompt(pattern));
  if (!options.zero_task_prompt) axpy(prompt, tasks_[task].prompt.value);
  return prompt;
}

ForwardResult PromptModel::forward_task(const SampleView& sample, std::size_t task,
                                        const ForwardOptions& options) const {
  validate_sample(sample);
  return forward_with_prompt(sample, task, combined_prompt(sample.pattern, task, options));
}

ForwardResult PromptModel::forward_with_prompt(const SampleView& sample, std::size_t task,
                                               const Matrix& prompt, ForwardTrace* trace) const {
  validate_sample(sample);
  require_task(task, tasks_.size());
  if (prompt.size() != dims_.prompt_dim) {
    fail(ErrorKind::Shape, kModule,
         "prompt has length " + std::to_string(prompt.size()) + ", expected d=" +
             std::to_string(dims_.prompt_dim));
  }
  std::vector<Matrix> embeddings = encode_views(sample);
  Matrix x = build_sequence(embeddings);
  const auto [prompt_k, prompt_v] = split_prompt(prompt);
  if (trace) {
    trace->view_embeddings = std::move(embeddings);
    trace->sequence = x;
    trace->prompt = prompt;
    trace->layers.assign(backbone_.layers.size(), LayerCache{});
  }
  for (std::size_t l = 0; l < backbone_.layers.size(); ++l) {
    x = layer_forward(backbone_.layers[l], backbone_.heads, x, prompt_k.values(),
                      prompt_v.values(), trace ? &trace->layers[l] : nullptr);
  }
  ForwardResult out;
  out.z = Matrix::column(x.row(0));
  const TaskSlot& slot = tasks_[task];
  out.logits = add(matmul(slot.head.weight.value, out.z), slot.head.bias.value);
  out.probs = sigmoid(out.logits);
  return out;
}

ForwardResult PromptModel::forward_plain(const SampleView& sample, std::size_t task) const {
  validate_sample(sample);
  require_task(task, tasks_.size());
  const std::vector<Matrix> embeddings = encode_views(sample);
  Matrix x = build_sequence(embeddings);
  for (const auto& layer : backbone_.layers) x = layer_forward(layer, backbone_.heads, x, {}, {}, nullptr);
  ForwardResult out;
  out.z = Matrix::column(x.row(0));
  const TaskSlot& slot = tasks_[task];
  out.logits = add(matmul(slot.head.weight.value, out.z), slot.head.bias.value);
  out.probs = sigmoid(out.logits);
  return out;
}

std::vector<ParamTensor*> PromptModel::parameters() {
  std::vector<ParamTensor*> out;
  for (auto& enc : encoders_) {
    out.push_back(&enc.weight);
    out.push_back(&enc.bias);
  }
  out.push_back(&backbone_.cls);
  for (auto& layer : backbone_.layers) {
    for (ParamTensor* p : layer.parameters()) out.push_back(p);
  }
  for (ParamTensor* p : bank_->parameters()) out.push_back(p);
  out.push_back(&view_weights_);
  for (auto& t : tasks_) {
    out.push_back(&t.prompt);
    out.push_back(&t.head.weight);
    out.push_back(&t.head.bias);
  }
  return out;
}

std::vector<const ParamTensor*> PromptModel::parameters() const {
  std::vector<const ParamTensor*> out;
  for (ParamTensor* p : const_cast<PromptModel*>(this)->parameters()) out.push_back(p);
  return out;
}

ParamTensor* PromptModel::find_parameter(const std::string& name) {
  for (ParamTensor* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

void PromptModel::zero_grad() {
  for (ParamTensor* p : parameters()) p->zero_grad();
}

// ------------------------------------------------------------------ losses

double bce_loss(const Matrix& probs, const Matrix& labels) {
  if (probs.size() != labels.size()) {
    fail(ErrorKind::Shape, kModule,
         "bce: " + std::to_string(probs.size()) + " probabilities for " +
             std::to_string(labels.size()) + " labels");
  }
  if (probs.size() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
    const double y = labels[i];
    total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return total / static_cast<double>(probs.size());
}

BceResult bce_with_logits(const Matrix& logits, const Matrix& labels, double normalizer) {
  if (logits.size() != labels.size()) {
    fail(ErrorKind::Shape, kModule,
         "bce: " + std::to_string(logits.size()) + " logits for " +
             std::to_string(labels.size()) + " labels");
  }
  const double norm = normalizer > 0.0 ? normalizer : static_cast<double>(logits.size());
  BceResult out;
  out.logits_grad = Matrix(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double raw = sigmoid(logits[i]);
    const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
    const double y = labels[i];
    out.loss -= (y * std::log(p) + (1.0 - y) * std::log(1.0 - p)) / norm;
    // The clamp is flat outside its range, so saturated entries get no gradient.
    if (raw > kProbClamp && raw < 1.0 - kProbClamp) out.logits_grad[i] = (raw - y) / norm;
  }
  return out;
}

std::vector<MissingPattern> dcl_patterns(const PromptBank& bank,
                                         std::span<const LabeledSample> batch,
                                         std::size_t subsample, std::uint64_t seed) {
  const std::size_t n = bank.views();
  const std::uint64_t total = std::uint64_t{1} << n;
  std::vector<MissingPattern> out;
  if (total * bank.prompt_dim() <= kMaterializeBudget) {
    out.reserve(static_cast<std::size_t>(total - 1));
    for (std::uint64_t idx = 1; idx < total; ++idx) out.push_back(MissingPattern::from_index(idx, n));
    return out;
  }
  std::set<std::uint64_t> chosen;
  for (const auto& item : batch) chosen.insert(item.sample.pattern.index());
  Rng rng(seed);
  const std::uint64_t valid = total - 1;
  const std::size_t target = std::max<std::size_t>(subsample, chosen.size());
  while (chosen.size() < target && chosen.size() < valid) chosen.insert(1 + rng.below(valid));
  for (std::uint64_t idx : chosen) out.push_back(MissingPattern::from_index(idx, n));
  return out;
}

LossBreakdown backward_step(PromptModel& model, std::span<const LabeledSample> batch,
                            std::size_t task, const LossOptions& options, bool accumulate) {
  if (batch.empty()) fail(ErrorKind::Validation, kModule, "empty batch");
  require_task(task, model.task_count());
  if (options.lambda < 0.0) fail(ErrorKind::Config, kModule, "lambda must be non-negative");

  const ModelDims& dims = model.dims();
  TaskSlot& slot = model.task(task);
  PromptBank& bank = model.bank();
  const std::size_t width = dims.model_dim();
  const double normalizer = static_cast<double>(batch.size() * slot.classes);

  std::map<std::uint64_t, Matrix> bank_prompts;
  std::map<std::uint64_t, Matrix> bank_upstream;
  LossBreakdown loss;

  for (const LabeledSample& item : batch) {
    if (item.labels.size() != slot.classes) {
      fail(ErrorKind::Shape, kModule,
           "label vector has " + std::to_string(item.labels.size()) + " entries, task " +
               std::to_string(task + 1) + " has " + std::to_string(slot.classes) + " classes");
    }
    const std::uint64_t key = item.sample.pattern.index();
    Matrix prompt(dims.prompt_dim, 1);
    if (!options.ablate_prompts) {
      auto it = bank_prompts.find(key);
      if (it == bank_prompts.end()) {
        it = bank_prompts.emplace(key, bank.prompt(item.sample.pattern)).first;
      }
      prompt = add(it->second, slot.prompt.value);
    }
    ForwardTrace trace;
    const ForwardResult fr = model.forward_with_prompt(item.sample, task, prompt, &trace);
    const BceResult bce = bce_with_logits(fr.logits, item.labels, normalizer);
    loss.bce += bce.loss;
    if (!accumulate) continue;

    if (slot.head.weight.updatable()) axpy(slot.head.weight.grad, matmul_nt(bce.logits_grad, fr.z));
    if (slot.head.bias.updatable()) axpy(slot.head.bias.grad, bce.logits_grad);
    const Matrix z_grad = matmul_tn(slot.head.weight.value, bce.logits_grad);

    Matrix x_grad(dims.views() + 1, width);
    for (std::size_t c = 0; c < width; ++c) x_grad(0, c) = z_grad[c];
    std::vector<double> prompt_grad(dims.prompt_dim, 0.0);
    for (std::size_t l = model.backbone().layers.size(); l-- > 0;) {
      LayerGrads g = layer_backward(model.backbone().layers[l], model.backbone().heads,
                                    trace.layers[l], x_grad);
      x_grad = std::move(g.input);
      for (std::size_t c = 0; c < width; ++c) {
        prompt_grad[c] += g.prompt_k[c];
        prompt_grad[width + c] += g.prompt_v[c];
      }
    }

    for (std::size_t v = 0; v < dims.views(); ++v) {
      Linear& enc = model.encoders()[v];
      const auto h_grad = x_grad.row(v + 1);
      if (enc.bias.updatable()) {
        for (std::size_t r = 0; r < width; ++r) enc.bias.grad[r] += h_grad[r];
      }
      if (enc.weight.updatable() && item.sample.pattern.observed(v)) {
        const auto x = item.sample.features[v];
        for (std::size_t r = 0; r < width; ++r) {
          auto row = enc.weight.grad.row(r);
          for (std::size_t c = 0; c < x.size(); ++c) row[c] += h_grad[r] * x[c];
        }
      }
    }

    if (!options.ablate_prompts) {
      if (slot.prompt.updatable()) {
        for (std::size_t i = 0; i < prompt_grad.size(); ++i) slot.prompt.grad[i] += prompt_grad[i];
      }
      auto [it, inserted] = bank_upstream.try_emplace(key, Matrix(dims.prompt_dim, 1));
      for (std::size_t i = 0; i < prompt_grad.size(); ++i) it->second[i] += prompt_grad[i];
    }
  }

  if (options.lambda > 0.0) {
    const std::vector<MissingPattern> patterns =
        dcl_patterns(bank, batch, options.dcl_pattern_subsample, options.dcl_seed);
    Matrix prompts(dims.prompt_dim, patterns.size());
    if (!options.ablate_prompts) {
      for (std::size_t j = 0; j < patterns.size(); ++j) {
        const auto it = bank_prompts.find(patterns[j].index());
        const Matrix column = it != bank_prompts.end() ? it->second : bank.prompt(patterns[j]);
        for (std::size_t r = 0; r < dims.prompt_dim; ++r) prompts(r, j) = column[r];
      }
    }
    const ParamTensor& w = model.view_weights();
    const PairSets pairs = build_pairs(patterns, w.value.values());
    const DclResult dcl = dcl_loss(prompts, patterns, pairs, w.value.values(), options.dcl);
    loss.dcl = dcl.loss;
    if (accumulate) {
      if (!options.ablate_prompts) {
        for (std::size_t j = 0; j < patterns.size(); ++j) {
          auto [it, inserted] =
              bank_upstream.try_emplace(patterns[j].index(), Matrix(dims.prompt_dim, 1));
          for (std::size_t r = 0; r < dims.prompt_dim; ++r) {
            it->second[r] += options.lambda * dcl.prompt_grad(r, j);
          }
        }
      }
      ParamTensor& wt = model.view_weights();
      if (wt.updatable()) axpy(wt.grad, dcl.weight_grad, options.lambda);
    }
  }

  if (accumulate) {
    for (const auto& [key, upstream] : bank_upstream) {
      bank.accumulate_grad(MissingPattern::from_index(key, dims.views()), upstream.values());
    }
  }
  loss.total = total_loss(loss.bce, loss.dcl, options.lambda);
  return loss;
}

}  // namespace ttprompt
