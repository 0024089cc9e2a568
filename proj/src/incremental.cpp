// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttprompt/incremental.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ttprompt/error.hpp"

namespace ttprompt {
namespace {

constexpr std::string_view kModule = "incremental";

std::vector<ParamTensor*> updatable_parameters(PromptModel& model) {
  std::vector<ParamTensor*> out;
  for (ParamTensor* p : model.parameters()) {
    if (p->updatable()) out.push_back(p);
  }
  return out;
}

void set_frozen(std::vector<ParamTensor*> params, bool frozen) {
  for (ParamTensor* p : params) p->frozen = frozen || !p->trainable;
}

ForwardOptions forward_options(bool ablate_prompts) {
  return ForwardOptions{ablate_prompts, ablate_prompts};
}

}  // namespace

std::vector<std::size_t> SessionPlan::cumulative_classes(std::size_t through) const {
  if (through == 0 || through > sessions()) {
    fail(ErrorKind::Config, kModule,
         "session " + std::to_string(through) + " outside 1.." + std::to_string(sessions()));
  }
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < through; ++t) {
    out.insert(out.end(), class_sets[t].begin(), class_sets[t].end());
  }
  return out;
}

void SessionPlan::validate() const {
  if (class_sets.empty()) fail(ErrorKind::Validation, kModule, "plan has no sessions");
  std::vector<std::uint8_t> seen(total_classes, 0);
  std::size_t count = 0;
  for (std::size_t t = 0; t < class_sets.size(); ++t) {
    const std::size_t expected = t == 0 ? base_classes : increment;
    if (class_sets[t].size() != expected) {
      fail(ErrorKind::Validation, kModule,
           "session " + std::to_string(t + 1) + " holds " + std::to_string(class_sets[t].size()) +
               " classes, expected " + std::to_string(expected));
    }
    for (std::size_t c : class_sets[t]) {
      if (c >= total_classes) {
        fail(ErrorKind::Validation, kModule, "class " + std::to_string(c) + " out of range");
      }
      if (seen[c]++) {
        fail(ErrorKind::Validation, kModule,
             "class " + std::to_string(c) + " appears in more than one session");
      }
      ++count;
    }
  }
  if (count != total_classes) {
    fail(ErrorKind::Validation, kModule, "plan does not cover every class");
  }
}

SessionPlan partition_classes(std::size_t classes, std::size_t base_classes, std::size_t sessions,
                              Rng& rng) {
  if (sessions == 0) fail(ErrorKind::Config, kModule, "at least one session is required");
  if (base_classes == 0) fail(ErrorKind::Config, kModule, "base_classes must be at least 1");
  if (base_classes > classes) {
    fail(ErrorKind::Config, kModule,
         "base_classes " + std::to_string(base_classes) + " exceeds class count " +
             std::to_string(classes));
  }
  const std::size_t rest = classes - base_classes;
  std::size_t increment = 0;
  if (sessions == 1) {
    if (rest != 0) {
      fail(ErrorKind::Config, kModule,
           "a single session must hold all " + std::to_string(classes) + " classes, base_classes is " +
               std::to_string(base_classes));
    }
  } else {
    const std::size_t remainder = rest % (sessions - 1);
    if (remainder != 0) {
      fail(ErrorKind::Config, kModule,
           std::to_string(rest) + " incremental classes do not divide into " +
               std::to_string(sessions - 1) + " sessions (remainder " + std::to_string(remainder) +
               ")");
    }
    increment = rest / (sessions - 1);
    if (increment == 0) fail(ErrorKind::Config, kModule, "incremental sessions would be empty");
  }

  std::vector<std::size_t> order(classes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));

  SessionPlan plan;
  plan.total_classes = classes;
  plan.base_classes = base_classes;
  plan.increment = increment;
  auto it = order.begin();
  plan.class_sets.emplace_back(it, it + static_cast<std::ptrdiff_t>(base_classes));
  it += static_cast<std::ptrdiff_t>(base_classes);
  for (std::size_t t = 1; t < sessions; ++t) {
    plan.class_sets.emplace_back(it, it + static_cast<std::ptrdiff_t>(increment));
    it += static_cast<std::ptrdiff_t>(increment);
  }
  plan.validate();
  return plan;
}

SessionAssignment assign_samples(const Dataset& dataset, const SessionPlan& plan,
                                 std::span<const std::size_t> subset) {
  if (plan.total_classes != dataset.classes) {
    fail(ErrorKind::Config, kModule,
         "plan covers " + std::to_string(plan.total_classes) + " classes, dataset has " +
             std::to_string(dataset.classes));
  }
  std::vector<std::size_t> all;
  if (subset.empty()) {
    all.resize(dataset.samples());
    std::iota(all.begin(), all.end(), std::size_t{0});
    subset = all;
  }
  std::vector<std::size_t> sorted(subset.begin(), subset.end());
  std::sort(sorted.begin(), sorted.end());

  SessionAssignment out;
  out.members.resize(plan.sessions());
  for (std::size_t i : sorted) {
    if (i >= dataset.samples()) {
      fail(ErrorKind::Validation, kModule, "sample " + std::to_string(i) + " out of range");
    }
    bool any = false;
    for (std::size_t t = 0; t < plan.sessions(); ++t) {
      const auto& set = plan.class_sets[t];
      const bool hit =
          std::any_of(set.begin(), set.end(), [&](std::size_t c) { return dataset.label(i, c); });
      if (hit) {
        out.members[t].push_back(i);
        any = true;
      }
    }
    if (!any) ++out.excluded;
  }
  return out;
}

void simulate_missing(Dataset& dataset, double rate, Rng& rng) {
  const std::size_t n = dataset.views();
  if (!(rate >= 0.0 && rate < 1.0)) {
    fail(ErrorKind::Config, kModule, "missing rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (static_cast<double>(n) * (1.0 - rate) < 1.0) {
    fail(ErrorKind::Config, kModule,
         "missing rate " + std::to_string(rate) + " is infeasible for " + std::to_string(n) +
             " views: n * (1 - p) must be at least 1");
  }
  const std::size_t count = dataset.samples();
  const auto target = static_cast<std::size_t>(std::llround(rate * static_cast<double>(count)));
  std::vector<std::size_t> order(count);
  for (std::size_t v = 0; v < n; ++v) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    std::size_t already = 0;
    for (std::size_t i = 0; i < count; ++i) already += !dataset.indicators[i].observed(v);
    std::size_t taken = already;
    for (std::size_t pos = 0; pos < count && taken < target; ++pos) {
      MissingPattern& m = dataset.indicators[order[pos]];
      if (!m.observed(v) || m.observed_count() < 2) continue;
      m.set(v, false);
      ++taken;
    }
    if (taken < target) {
      fail(ErrorKind::Validation, kModule,
           "view " + std::to_string(v) + ": only " + std::to_string(taken) + " of " +
               std::to_string(target) + " instances could be removed without emptying a sample");
    }
  }
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t i = 0; i < count; ++i) {
      if (!dataset.indicators[i].observed(v)) {
        for (double& x : dataset.features[v].row(i)) x = 0.0;
      }
    }
  }
}

void apply_freeze_schedule(PromptModel& model, std::size_t task, bool train_ept_every_session,
                           bool ablate_prompts) {
  if (task >= model.task_count()) {
    fail(ErrorKind::Config, kModule, "task " + std::to_string(task + 1) + " is not registered");
  }
  set_frozen(model.parameters(), true);

  const bool first = task == 0;
  if (first) {
    std::vector<ParamTensor*> enc;
    for (Linear& l : model.encoders()) {
      enc.push_back(&l.weight);
      enc.push_back(&l.bias);
    }
    set_frozen(enc, false);
  }
  if ((first || train_ept_every_session) && !ablate_prompts) {
    set_frozen(model.bank().parameters(), false);
    set_frozen({&model.view_weights()}, false);
  }
  TaskSlot& slot = model.task(task);
  set_frozen({&slot.head.weight, &slot.head.bias}, false);
  if (!ablate_prompts) set_frozen({&slot.prompt}, false);
}

Matrix restricted_labels(const Dataset& dataset, std::size_t sample,
                         std::span<const std::size_t> classes) {
  Matrix out(classes.size(), 1);
  for (std::size_t j = 0; j < classes.size(); ++j) out[j] = dataset.label(sample, classes[j]) ? 1.0 : 0.0;
  return out;
}

SessionLog train_session(PromptModel& model, const Dataset& dataset, const SessionPlan& plan,
                         std::size_t task, std::span<const std::size_t> train,
                         std::span<const std::size_t> val, const TrainOptions& options,
                         Rng& init_rng, Rng& batch_rng) {
  if (task >= plan.sessions()) {
    fail(ErrorKind::Config, kModule, "session " + std::to_string(task + 1) + " is not in the plan");
  }
  if (model.task_count() < task) {
    fail(ErrorKind::Config, kModule,
         "session " + std::to_string(task + 1) + " requires sessions 1.." + std::to_string(task) +
             " first");
  }
  if (train.empty()) {
    fail(ErrorKind::Validation, kModule, "session " + std::to_string(task + 1) + " has no training data");
  }
  if (options.batch_size == 0) fail(ErrorKind::Config, kModule, "batch_size must be positive");
  const auto& classes = plan.class_sets[task];
  if (model.task_count() == task) model.add_task(classes.size(), init_rng);
  if (model.task(task).classes != classes.size()) {
    fail(ErrorKind::Shape, kModule, "registered head width differs from the session class count");
  }

  apply_freeze_schedule(model, task, options.train_ept_every_session, options.loss.ablate_prompts);
  const std::vector<ParamTensor*> params = updatable_parameters(model);
  for (ParamTensor* p : params) p->reset_optimizer_state();

  std::vector<LabeledSample> items;
  items.reserve(train.size());
  for (std::size_t i : train) items.push_back({dataset.view(i), restricted_labels(dataset, i, classes)});

  const ForwardOptions fwd = forward_options(options.loss.ablate_prompts);
  auto validation_map = [&]() -> double {
    if (val.empty()) return -1.0;
    Matrix scores(val.size(), classes.size());
    Matrix labels(val.size(), classes.size());
    for (std::size_t r = 0; r < val.size(); ++r) {
      const ForwardResult fr = model.forward_task(dataset.view(val[r]), task, fwd);
      for (std::size_t c = 0; c < classes.size(); ++c) {
        scores(r, c) = fr.probs[c];
        labels(r, c) = dataset.label(val[r], classes[c]) ? 1.0 : 0.0;
      }
    }
    const MetricValues m = compute_metrics(scores, labels);
    return m.evaluated_classes > 0 ? m.map : -1.0;
  };

  SessionLog log;
  std::vector<Matrix> best;
  double best_map = -1.0;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<LabeledSample> batch;

  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    batch_rng.shuffle(std::span<std::size_t>(order));
    EpochLog entry;
    entry.epoch = epoch;
    double weight_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t stop = std::min(order.size(), start + options.batch_size);
      batch.clear();
      for (std::size_t j = start; j < stop; ++j) batch.push_back(items[order[j]]);
      LossOptions loss_options = options.loss;
      loss_options.dcl_seed = batch_rng.next_u64();
      model.zero_grad();
      const LossBreakdown loss = backward_step(model, batch, task, loss_options);
      adam_step(params, options.adam, ++log.steps);
      const double w = static_cast<double>(batch.size());
      entry.mean_loss.total += w * loss.total;
      entry.mean_loss.bce += w * loss.bce;
      entry.mean_loss.dcl += w * loss.dcl;
      weight_sum += w;
    }
    entry.mean_loss.total /= weight_sum;
    entry.mean_loss.bce /= weight_sum;
    entry.mean_loss.dcl /= weight_sum;
    for (const ParamTensor* p : params) {
      if (!all_finite(p->value)) {
        fail(ErrorKind::Numeric, kModule,
             "parameter " + p->name + " became non-finite in epoch " + std::to_string(epoch));
      }
    }
    entry.val_map = validation_map();
    log.epochs.push_back(entry);

    if (entry.val_map < 0.0) {
      log.best_epoch = epoch;
      continue;
    }
    if (best.empty() || entry.val_map > best_map) {
      best_map = entry.val_map;
      log.best_epoch = epoch;
      since_best = 0;
      best.clear();
      for (const ParamTensor* p : params) best.push_back(p->value);
    } else if (options.patience > 0 && ++since_best >= options.patience) {
      break;
    }
  }

  if (!best.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  }
  model.zero_grad();
  return log;
}

Inference infer(const PromptModel& model, const SampleView& sample, std::size_t tasks,
                const ForwardOptions& options) {
  if (model.task_count() == 0) fail(ErrorKind::Config, kModule, "no trained session");
  if (tasks == 0) tasks = model.task_count();
  if (tasks > model.task_count()) {
    fail(ErrorKind::Config, kModule,
         "requested " + std::to_string(tasks) + " pathways, model has " +
             std::to_string(model.task_count()));
  }
  std::size_t width = 0;
  for (std::size_t t = 0; t < tasks; ++t) width += model.task(t).classes;
  Inference out;
  out.probs = Matrix(width, 1);
  out.predicted.resize(width);
  std::size_t offset = 0;
  for (std::size_t t = 0; t < tasks; ++t) {
    const ForwardResult fr = model.forward_task(sample, t, options);
    for (std::size_t c = 0; c < fr.probs.size(); ++c) {
      out.probs[offset + c] = fr.probs[c];
      out.predicted[offset + c] = fr.probs[c] >= kDecisionThreshold ? 1 : 0;
    }
    offset += fr.probs.size();
  }
  return out;
}

MetricValues evaluate(const PromptModel& model, const Dataset& dataset,
                      std::span<const std::size_t> test, const SessionPlan& plan,
                      std::size_t through, const ForwardOptions& options) {
  if (test.empty()) fail(ErrorKind::Validation, kModule, "empty test set");
  if (through > model.task_count()) {
    fail(ErrorKind::Config, kModule,
         "evaluation through session " + std::to_string(through) + " but only " +
             std::to_string(model.task_count()) + " are trained");
  }
  const std::vector<std::size_t> classes = plan.cumulative_classes(through);
  Matrix scores(test.size(), classes.size());
  Matrix labels(test.size(), classes.size());
  for (std::size_t r = 0; r < test.size(); ++r) {
    const Inference inf = infer(model, dataset.view(test[r]), through, options);
    for (std::size_t c = 0; c < classes.size(); ++c) {
      scores(r, c) = inf.probs[c];
      labels(r, c) = dataset.label(test[r], classes[c]) ? 1.0 : 0.0;
    }
  }
  return compute_metrics(scores, labels);
}

}  // namespace ttprompt
