// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttprompt/experiment.hpp"

#include <chrono>
#include <cmath>

#include "ttprompt/error.hpp"

namespace ttprompt {
namespace {

constexpr std::string_view kModule = "experiment";
using nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Rng stream(std::uint64_t seed, Stream s) { return Rng(seed).fork(static_cast<std::uint64_t>(s)); }

std::vector<std::size_t> split_members(const Dataset& ds, SplitTag tag) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ds.samples(); ++i) {
    if (ds.splits[i] == tag) out.push_back(i);
  }
  return out;
}

ordered_json mean_std(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  // Sample standard deviation; zero for a single run.
  const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
  ordered_json j;
  j["mean"] = mean;
  j["std"] = sd;
  return j;
}

ordered_json metrics_json(const MetricValues& m) {
  ordered_json j;
  j["mAP"] = m.map;
  j["CF1"] = m.cf1;
  j["OF1"] = m.of1;
  j["evaluated_classes"] = m.evaluated_classes;
  j["skipped_classes"] = m.skipped_classes;
  return j;
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  PreparedData out;
  out.dataset = config.dataset.empty() ? generate_synthetic(config.synthetic)
                                       : load_dataset(config.dataset);
  Dataset& ds = out.dataset;
  ds.validate();

  Rng partition = stream(seed, Stream::Partition);
  out.plan = partition_classes(ds.classes, config.base_classes, config.sessions, partition);
  Rng split = stream(seed, Stream::Split);
  assign_splits(ds, config.val_fraction, config.test_fraction, split);
  Rng missing = stream(seed, Stream::Missing);
  simulate_missing(ds, config.missing_rate, missing);

  out.train = split_members(ds, SplitTag::Train);
  out.val = split_members(ds, SplitTag::Val);
  out.test = split_members(ds, SplitTag::Test);
  if (out.test.empty()) fail(ErrorKind::Config, kModule, "test split is empty");
  out.train_sessions = assign_samples(ds, out.plan, out.train);
  out.val_sessions = out.val.empty() ? SessionAssignment{std::vector<std::vector<std::size_t>>(
                                                             out.plan.sessions()),
                                                         0}
                                     : assign_samples(ds, out.plan, out.val);
  return out;
}

double mean_prevalence(const Dataset& dataset, std::span<const std::size_t> samples,
                       std::span<const std::size_t> classes) {
  double sum = 0.0;
  std::size_t evaluated = 0;
  for (std::size_t c : classes) {
    std::size_t pos = 0;
    for (std::size_t i : samples) pos += dataset.label(i, c);
    if (pos == 0) continue;
    sum += static_cast<double>(pos) / static_cast<double>(samples.size());
    ++evaluated;
  }
  return evaluated ? sum / static_cast<double>(evaluated) : 0.0;
}

ForwardOptions eval_options(const ExperimentConfig& config) {
  return ForwardOptions{config.ablate_prompts, config.ablate_prompts};
}

std::vector<MetricValues> evaluate_all(const PromptModel& model, const PreparedData& data,
                                       const ExperimentConfig& config) {
  std::vector<MetricValues> out;
  for (std::size_t t = 1; t <= model.task_count(); ++t) {
    out.push_back(evaluate(model, data.dataset, data.test, data.plan, t, eval_options(config)));
  }
  return out;
}

SeedRun run_seed(const ExperimentConfig& config, std::uint64_t seed, const RunHooks* hooks) {
  const auto start = Clock::now();
  const PreparedData data = prepare_data(config, seed);
  const TrainOptions options = config.train_options();

  SeedRun run;
  run.seed = seed;
  run.plan = data.plan;
  run.excluded_samples = data.train_sessions.excluded;
  Rng init = stream(seed, Stream::Init);
  Rng batches = stream(seed, Stream::Batches);
  run.model.emplace(config.model_dims(data.dataset.view_dims), init);
  PromptModel& model = *run.model;

  for (std::size_t t = 0; t < data.plan.sessions(); ++t) {
    const auto session_start = Clock::now();
    if (hooks && hooks->before_session) hooks->before_session(t, model, data);
    SessionResult r;
    r.session = t + 1;
    r.classes = data.plan.class_sets[t].size();
    const auto& train = data.train_sessions.members[t];
    const auto& val = data.val_sessions.members[t];
    r.train_samples = train.size();
    r.val_samples = val.size();
    r.log = train_session(model, data.dataset, data.plan, t, train, val, options, init, batches);
    const std::vector<std::size_t> classes = data.plan.cumulative_classes(t + 1);
    r.cumulative_classes = classes.size();
    r.metrics = evaluate(model, data.dataset, data.test, data.plan, t + 1, eval_options(config));
    r.chance_map = mean_prevalence(data.dataset, data.test, classes);
    if (hooks && hooks->after_session) hooks->after_session(t, model, data);
    r.seconds = seconds_since(session_start);
    run.sessions.push_back(std::move(r));
  }

  double sum = 0.0;
  for (const SessionResult& r : run.sessions) sum += r.metrics.map;
  run.average_map = sum / static_cast<double>(run.sessions.size());
  run.last_map = run.sessions.back().metrics.map;
  for (const ParamTensor* p : model.bank().parameters()) run.bank_parameters += p->value.size();
  for (const ParamTensor* p : model.parameters()) {
    if (p->trainable) run.trainable_parameters += p->value.size();
  }
  run.seconds = seconds_since(start);
  return run;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunHooks* hooks) {
  config.validate();
  ExperimentResult result;
  for (std::uint64_t seed : config.seeds) result.runs.push_back(run_seed(config, seed, hooks));
  return result;
}

ordered_json report_json(const ExperimentConfig& config, const ExperimentResult& result) {
  ordered_json j;
  j["format"] = "ttprompt-report";
  j["version"] = 1;
  j["config_hash"] = config_hash(config);
  j["seeds"] = config.seeds;
  j["config"] = config_to_json(config);

  ordered_json runs = ordered_json::array();
  std::vector<double> avg, last;
  for (const SeedRun& run : result.runs) {
    ordered_json r;
    r["seed"] = run.seed;
    r["excluded_samples"] = run.excluded_samples;
    ordered_json sessions = ordered_json::array();
    for (const SessionResult& s : run.sessions) {
      ordered_json e;
      e["session"] = s.session;
      e["classes"] = s.classes;
      e["cumulative_classes"] = s.cumulative_classes;
      e["train_samples"] = s.train_samples;
      e["val_samples"] = s.val_samples;
      e["metrics"] = metrics_json(s.metrics);
      e["chance_mAP"] = s.chance_map;
      e["epochs_run"] = s.log.epochs.size();
      e["best_epoch"] = s.log.best_epoch;
      e["steps"] = s.log.steps;
      ordered_json epochs = ordered_json::array();
      for (const EpochLog& ep : s.log.epochs) {
        ordered_json x;
        x["epoch"] = ep.epoch;
        x["total"] = ep.mean_loss.total;
        x["bce"] = ep.mean_loss.bce;
        x["dcl"] = ep.mean_loss.dcl;
        if (ep.val_map >= 0.0) {
          x["val_mAP"] = ep.val_map;
        } else {
          x["val_mAP"] = nullptr;
        }
        epochs.push_back(std::move(x));
      }
      e["log"] = std::move(epochs);
      sessions.push_back(std::move(e));
    }
    r["sessions"] = std::move(sessions);
    r["average_mAP"] = run.average_map;
    r["last_mAP"] = run.last_map;
    ordered_json params;
    params["bank"] = to_string(config.bank);
    params["bank_parameters"] = run.bank_parameters;
    params["trainable_parameters"] = run.trainable_parameters;
    r["parameters"] = std::move(params);
    runs.push_back(std::move(r));
    avg.push_back(run.average_map);
    last.push_back(run.last_map);
  }
  j["runs"] = std::move(runs);
  ordered_json summary;
  summary["runs"] = result.runs.size();
  summary["average_mAP"] = mean_std(avg);
  summary["last_mAP"] = mean_std(last);
  j["summary"] = std::move(summary);
  return j;
}

ordered_json timing_json(const ExperimentResult& result) {
  ordered_json j;
  ordered_json runs = ordered_json::array();
  for (const SeedRun& run : result.runs) {
    ordered_json r;
    r["seed"] = run.seed;
    r["seconds"] = run.seconds;
    ordered_json sessions = ordered_json::array();
    for (const SessionResult& s : run.sessions) sessions.push_back(s.seconds);
    r["session_seconds"] = std::move(sessions);
    runs.push_back(std::move(r));
  }
  j["runs"] = std::move(runs);
  return j;
}

ordered_json param_table(const ExperimentConfig& config) {
  config.validate();
  const std::size_t d = config.prompt_dim, k = config.factors, R = config.tt_rank;
  ordered_json rows = ordered_json::array();
  std::vector<std::uint64_t> exact, map;
  for (std::size_t n = config.params_n_min; n <= config.params_n_max; ++n) {
    const ParamCount ept = param_count(CountKind::Ept, n, d, k, R);
    const ParamCount dense = param_count(CountKind::Map, n, d, k, R);
    ordered_json row;
    row["n"] = n;
    row["ept_exact"] = ept.count;
    row["ept_bound"] = ept.bound;
    row["map"] = dense.count;
    row["msp"] = param_count(CountKind::Msp, n, d, k, R).count;
    row["epe_p"] = param_count(CountKind::EpeP, n, d, k, R).count;
    rows.push_back(std::move(row));
    exact.push_back(ept.count);
    map.push_back(dense.count);
  }

  ordered_json growth;
  std::optional<std::uint64_t> step;
  bool affine = true, doubling = true;
  for (std::size_t i = 1; i < exact.size(); ++i) {
    const std::uint64_t diff = exact[i] - exact[i - 1];
    if (step && *step != diff) affine = false;
    step = diff;
    if (map[i] != 2 * map[i - 1]) doubling = false;
  }
  if (step && affine) {
    growth["ept_exact_increment"] = *step;
  } else {
    growth["ept_exact_increment"] = nullptr;
  }
  growth["ept_exact_affine"] = affine;
  growth["map_doubles"] = doubling;
  growth["ept"] = affine ? "linear in n" : "not linear in n";
  growth["map"] = doubling ? "exponential in n (x2 per view)" : "not exponential in n";

  ordered_json j;
  j["prompt_dim"] = d;
  j["factors"] = k;
  j["tt_rank"] = R;
  j["rows"] = std::move(rows);
  j["growth"] = std::move(growth);
  return j;
}

ordered_json run_sweep(const ExperimentConfig& config) {
  config.validate();
  ordered_json cells = ordered_json::array();
  for (std::size_t k : config.sweep_factors) {
    for (std::size_t r : config.sweep_ranks) {
      ExperimentConfig cell = config;
      cell.factors = k;
      cell.tt_rank = r;
      cell.tt_ranks.clear();
      const ExperimentResult result = run_experiment(cell);
      std::vector<double> last, avg;
      for (const SeedRun& run : result.runs) {
        last.push_back(run.last_map);
        avg.push_back(run.average_map);
      }
      const std::size_t views = result.runs.front().model->dims().views();
      ordered_json c;
      c["factors"] = k;
      c["rank"] = r;
      c["config_hash"] = config_hash(cell);
      c["last_mAP"] = mean_std(last);
      c["average_mAP"] = mean_std(avg);
      c["param_count"] = param_count(CountKind::Ept, views, cell.prompt_dim, k, r).count;
      c["bank_parameters"] = result.runs.front().bank_parameters;
      cells.push_back(std::move(c));
    }
  }
  ordered_json j;
  j["config_hash"] = config_hash(config);
  j["bank"] = to_string(config.bank);
  j["cells"] = std::move(cells);
  return j;
}

}  // namespace ttprompt
