// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttprompt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ttprompt/dcl.hpp"
#include "ttprompt/incremental.hpp"
#include "ttprompt/transformer.hpp"

namespace ttprompt {
namespace {

struct Group {
  std::string name;
  std::vector<ParamTensor*> params;
};

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.compare(0, prefix.size(), prefix) == 0;
}

void randomize(std::vector<ParamTensor*> params, Rng& rng) {
  for (ParamTensor* p : params) {
    for (double& v : p->value.values()) v = rng.uniform(-0.5, 0.5);
  }
}

GradBlock compare(const std::string& name, int phase, std::vector<double> analytic,
                  const std::vector<double>& numeric, const GradcheckOptions& options) {
  if (name == options.corrupt_block) {
    for (double& a : analytic) a *= 1.5;
  }
  GradBlock b;
  b.name = name;
  b.phase = phase;
  b.elements = analytic.size();
  double an = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    an += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  b.analytic_norm = std::sqrt(an);
  b.numeric_norm = std::sqrt(nn);
  b.rel_error = relative_error(analytic, numeric);
  b.pass = b.rel_error <= options.tolerance;
  return b;
}

std::vector<Group> model_groups(PromptModel& model, std::size_t task) {
  const std::string t = "task" + std::to_string(task + 1);
  std::vector<Group> groups = {{"ept.basis", {}},  {"ept.cores", {}},       {"dcl.view_weights", {}},
                               {"encoders", {}},   {t + ".prompt", {}},    {t + ".head", {}}};
  for (ParamTensor* p : model.parameters()) {
    if (!p->updatable()) continue;
    const std::string& n = p->name;
    if (n == "ept.basis") {
      groups[0].params.push_back(p);
    } else if (starts_with(n, "ept.core") || n == "ept.terminal") {
      groups[1].params.push_back(p);
    } else if (n == "dcl.view_weights") {
      groups[2].params.push_back(p);
    } else if (starts_with(n, "encoder.")) {
      groups[3].params.push_back(p);
    } else if (n == t + ".prompt") {
      groups[4].params.push_back(p);
    } else if (starts_with(n, t + ".head.")) {
      groups[5].params.push_back(p);
    }
  }
  std::erase_if(groups, [](const Group& g) { return g.params.empty(); });
  return groups;
}

void check_model(PromptModel& model, std::span<const LabeledSample> batch, std::size_t task,
                 int phase, const LossOptions& loss, const GradcheckOptions& options,
                 GradcheckReport& report) {
  model.zero_grad();
  backward_step(model, batch, task, loss, true);
  const auto objective = [&] { return backward_step(model, batch, task, loss, false).total; };
  for (const Group& g : model_groups(model, task)) {
    std::vector<double> analytic, numeric;
    for (ParamTensor* p : g.params) {
      const auto grad = p->grad.values();
      analytic.insert(analytic.end(), grad.begin(), grad.end());
      const Matrix fd = finite_diff_grad(objective, *p, options.step);
      numeric.insert(numeric.end(), fd.values().begin(), fd.values().end());
    }
    report.blocks.push_back(compare(g.name, phase, std::move(analytic), numeric, options));
  }
}

}  // namespace

double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, an = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    an += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(an), std::sqrt(nn), 1e-300});
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  GradcheckReport report;
  report.step = options.step;
  report.tolerance = options.tolerance;
  Rng rng(options.seed);

  ModelDims dims;
  dims.view_dims = {3, 2};
  dims.prompt_dim = 8;
  dims.layers = 1;
  dims.heads = 1;
  dims.factors = 2;
  dims.tt_ranks = EptBank::uniform_ranks(2, 2);
  PromptModel model(dims, rng);
  model.add_task(2, rng);
  // A generic point: the default init leaves prompts near zero.
  randomize(model.parameters(), rng);

  std::vector<std::vector<double>> storage;
  std::vector<LabeledSample> batch;
  const std::uint64_t patterns[] = {0b11, 0b01, 0b10};
  for (std::uint64_t bits : patterns) {
    SampleView s;
    s.pattern = MissingPattern::from_index(bits, 2);
    for (std::size_t v = 0; v < 2; ++v) {
      std::vector<double> x(dims.view_dims[v]);
      for (double& e : x) e = s.pattern.observed(v) ? rng.normal() : 0.0;
      storage.push_back(std::move(x));
    }
    batch.push_back({std::move(s), Matrix(2, 1)});
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    batch[i].sample.features = {storage[2 * i], storage[2 * i + 1]};
    batch[i].labels[0] = static_cast<double>(i % 2);
    batch[i].labels[1] = static_cast<double>((i + 1) % 2);
  }

  LossOptions loss;
  loss.lambda = options.lambda;
  loss.dcl.alpha = options.alpha;
  loss.dcl.weighted_positive_term = options.weighted_positive_term;
  loss.dcl_seed = options.seed;

  apply_freeze_schedule(model, 0, false, false);
  check_model(model, batch, 0, 1, loss, options, report);

  {
    // The contrastive loss on its own, over every valid pattern.
    std::vector<MissingPattern> all;
    for (std::uint64_t m = 1; m < 4; ++m) all.push_back(MissingPattern::from_index(m, 2));
    Matrix prompts(dims.prompt_dim, all.size());
    for (double& v : prompts.values()) v = rng.uniform(-0.2, 0.2);
    Matrix w(2, 1);
    for (double& v : w.values()) v = rng.uniform(-1.0, 1.0);
    const PairSets pairs = build_pairs(all, w.values());
    const DclResult r = dcl_loss(prompts, all, pairs, w.values(), loss.dcl);
    const Matrix fd_p = finite_diff_grad(
        [&](const Matrix& p) { return dcl_loss(p, all, pairs, w.values(), loss.dcl).loss; },
        prompts, options.step);
    const Matrix fd_w = finite_diff_grad(
        [&](const Matrix& x) {
          return dcl_loss(prompts, all, build_pairs(all, x.values()), x.values(), loss.dcl).loss;
        },
        w, options.step);
    const auto ap = r.prompt_grad.values();
    const auto aw = r.weight_grad.values();
    report.blocks.push_back(compare("dcl.prompts", 1, {ap.begin(), ap.end()},
                                    {fd_p.values().begin(), fd_p.values().end()}, options));
    report.blocks.push_back(compare("dcl.weights", 1, {aw.begin(), aw.end()},
                                    {fd_w.values().begin(), fd_w.values().end()}, options));
  }

  model.add_task(3, rng);
  randomize({&model.task(1).prompt, &model.task(1).head.weight, &model.task(1).head.bias}, rng);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Matrix y(3, 1);
    for (std::size_t c = 0; c < 3; ++c) y[c] = static_cast<double>((i + c) % 2);
    batch[i].labels = y;
  }
  apply_freeze_schedule(model, 1, false, false);
  check_model(model, batch, 1, 2, loss, options, report);

  report.pass = std::all_of(report.blocks.begin(), report.blocks.end(),
                            [](const GradBlock& b) { return b.pass; });
  return report;
}

nlohmann::ordered_json gradcheck_json(const GradcheckReport& report) {
  nlohmann::ordered_json j;
  j["step"] = report.step;
  j["tolerance"] = report.tolerance;
  j["pass"] = report.pass;
  nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
  for (const GradBlock& b : report.blocks) {
    nlohmann::ordered_json e;
    e["block"] = b.name;
    e["phase"] = b.phase;
    e["elements"] = b.elements;
    e["analytic_norm"] = b.analytic_norm;
    e["numeric_norm"] = b.numeric_norm;
    e["rel_error"] = b.rel_error;
    e["pass"] = b.pass;
    blocks.push_back(std::move(e));
  }
  j["blocks"] = std::move(blocks);
  return j;
}

}  // namespace ttprompt
