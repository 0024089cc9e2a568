// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "ttprompt/config.hpp"
#include "ttprompt/data.hpp"
#include "ttprompt/incremental.hpp"
#include "ttprompt/metrics.hpp"
#include "ttprompt/transformer.hpp"

namespace ttprompt {

/// Sub-stream ids forked from the run seed.
enum class Stream : std::uint64_t { Partition = 1, Split = 2, Missing = 3, Init = 4, Batches = 5 };

struct PreparedData {
  Dataset dataset;
  SessionPlan plan;
  std::vector<std::size_t> train, val, test;
  SessionAssignment train_sessions;
  SessionAssignment val_sessions;
};

/// Loads or generates the data, partitions classes, splits, and applies
/// missingness, all from forks of `seed`.
PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed);

struct SessionResult {
  std::size_t session = 0;  // 1-based
  std::size_t classes = 0;
  std::size_t cumulative_classes = 0;
  std::size_t train_samples = 0;
  std::size_t val_samples = 0;
  MetricValues metrics;
  /// Mean test prevalence over evaluated cumulative classes.
  double chance_map = 0.0;
  SessionLog log;
  double seconds = 0.0;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::size_t excluded_samples = 0;
  std::vector<SessionResult> sessions;
  double average_map = 0.0;
  double last_map = 0.0;
  std::uint64_t bank_parameters = 0;
  std::uint64_t trainable_parameters = 0;
  std::optional<PromptModel> model;
  SessionPlan plan;
  double seconds = 0.0;
};

struct RunHooks {
  /// Called with the 0-based session index before and after it trains.
  std::function<void(std::size_t, const PromptModel&, const PreparedData&)> before_session;
  std::function<void(std::size_t, const PromptModel&, const PreparedData&)> after_session;
};

SeedRun run_seed(const ExperimentConfig& config, std::uint64_t seed, const RunHooks* hooks = nullptr);

struct ExperimentResult {
  std::vector<SeedRun> runs;
};

/// One run per configured seed, in order.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunHooks* hooks = nullptr);

/// Evaluation-only forward options matching the config's ablation switch.
ForwardOptions eval_options(const ExperimentConfig& config);

/// Metrics of every session prefix on the test split.
std::vector<MetricValues> evaluate_all(const PromptModel& model, const PreparedData& data,
                                       const ExperimentConfig& config);

double mean_prevalence(const Dataset& dataset, std::span<const std::size_t> samples,
                       std::span<const std::size_t> classes);

/// Deterministic report: no wall-clock values.
nlohmann::ordered_json report_json(const ExperimentConfig& config, const ExperimentResult& result);
/// Wall-clock sidecar for a report.
nlohmann::ordered_json timing_json(const ExperimentResult& result);

/// Bank counts for n in [params_n_min, params_n_max] plus a growth summary.
nlohmann::ordered_json param_table(const ExperimentConfig& config);

/// One experiment per (factors, rank) cell of the sweep grid.
nlohmann::ordered_json run_sweep(const ExperimentConfig& config);

}  // namespace ttprompt
