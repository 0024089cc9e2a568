// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ttprompt/data.hpp"
#include "ttprompt/metrics.hpp"
#include "ttprompt/numcore.hpp"
#include "ttprompt/transformer.hpp"

namespace ttprompt {

/// Disjoint class sets, one per session. Session 1 holds the base classes,
/// every later session the same number of new classes.
struct SessionPlan {
  std::size_t total_classes = 0;
  std::size_t base_classes = 0;
  std::size_t increment = 0;
  std::vector<std::vector<std::size_t>> class_sets;

  std::size_t sessions() const noexcept { return class_sets.size(); }
  /// Classes of sessions 1..through (1-based), concatenated in session order.
  std::vector<std::size_t> cumulative_classes(std::size_t through) const;
  /// Disjointness, coverage, and set sizes.
  void validate() const;
};

/// Shuffles 0..C-1 and deals C_base classes to session 1, then
/// (C - C_base) / (T - 1) to each later session.
SessionPlan partition_classes(std::size_t classes, std::size_t base_classes, std::size_t sessions,
                              Rng& rng);

struct SessionAssignment {
  /// members[t] lists sample indices in ascending order.
  std::vector<std::vector<std::size_t>> members;
  /// Samples with no positive label in any session.
  std::size_t excluded = 0;
};

/// Sample i joins session t iff one of its positive labels is in C^t.
/// Restricted to `subset` when given.
SessionAssignment assign_samples(const Dataset& dataset, const SessionPlan& plan,
                                 std::span<const std::size_t> subset = {});

/// Marks exactly round(p * N) instances of every view missing and zeroes
/// their features, never removing an instance's last observed view.
///
/// Views are processed in order. For each view a seeded permutation of the
/// samples is walked and a sample is taken while it still has another
/// observed view; ineligible samples are passed over in favour of the next
/// one in permutation order.
void simulate_missing(Dataset& dataset, double rate, Rng& rng);

struct TrainOptions {
  std::size_t epochs = 50;
  /// Early stop after this many epochs without a validation mAP gain; 0 disables.
  std::size_t patience = 10;
  std::size_t batch_size = 128;
  AdamOptions adam;
  LossOptions loss;
  bool train_ept_every_session = false;
};

/// Session 1 trains encoders, its prompt and head, the prompt bank and the
/// view weights; later sessions train only their own prompt and head. The
/// backbone stays frozen. With `train_ept_every_session` the bank and view
/// weights also train in later sessions. Prompt parameters stay frozen when
/// prompts are ablated.
void apply_freeze_schedule(PromptModel& model, std::size_t task, bool train_ept_every_session,
                           bool ablate_prompts);

struct EpochLog {
  std::size_t epoch = 0;
  LossBreakdown mean_loss;
  /// Validation mAP on the session's own classes; negative when undefined.
  double val_map = -1.0;
};

struct SessionLog {
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
};

/// Labels of `sample` restricted to `classes`, as a column.
Matrix restricted_labels(const Dataset& dataset, std::size_t sample,
                         std::span<const std::size_t> classes);

/// Trains task `task` (0-based) on `train` with minibatch Adam on the total
/// loss, registering the task's prompt and head first when needed.
SessionLog train_session(PromptModel& model, const Dataset& dataset, const SessionPlan& plan,
                         std::size_t task, std::span<const std::size_t> train,
                         std::span<const std::size_t> val, const TrainOptions& options,
                         Rng& init_rng, Rng& batch_rng);

struct Inference {
  Matrix probs;  // sum_t |C^t| x 1, task segments in session order
  std::vector<std::uint8_t> predicted;
};

/// Runs every task pathway 1..tasks (all when 0) and concatenates the
/// probabilities. Predictions are positive at prob >= 0.5.
Inference infer(const PromptModel& model, const SampleView& sample, std::size_t tasks = 0,
                const ForwardOptions& options = {});

/// Metrics on `test` over the cumulative classes of sessions 1..through.
MetricValues evaluate(const PromptModel& model, const Dataset& dataset,
                      std::span<const std::size_t> test, const SessionPlan& plan,
                      std::size_t through, const ForwardOptions& options = {});

}  // namespace ttprompt
