// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttprompt/ttprompt.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <optional>
#include <string>

#include "ttprompt/checkpoint.hpp"
#include "ttprompt/config.hpp"
#include "ttprompt/error.hpp"
#include "ttprompt/experiment.hpp"
#include "ttprompt/gradcheck.hpp"

struct ttp_experiment {
  ttprompt::ExperimentConfig config;
  std::optional<ttprompt::ExperimentResult> result;
};

namespace {

thread_local std::string last_error;

ttp_status status_of(ttprompt::ErrorKind kind) {
  using ttprompt::ErrorKind;
  switch (kind) {
    case ErrorKind::Config: return TTP_ERR_CONFIG;
    case ErrorKind::Shape: return TTP_ERR_SHAPE;
    case ErrorKind::Validation: return TTP_ERR_VALIDATION;
    case ErrorKind::Capacity: return TTP_ERR_CAPACITY;
    case ErrorKind::Numeric: return TTP_ERR_NUMERIC;
    case ErrorKind::Io: return TTP_ERR_IO;
    case ErrorKind::Internal: return TTP_ERR_INTERNAL;
  }
  return TTP_ERR_INTERNAL;
}

ttp_status set_error(ttp_status status, std::string message) {
  last_error = std::move(message);
  return status;
}

template <typename F>
ttp_status guarded(F&& body) {
  try {
    last_error.clear();
    return body();
  } catch (const ttprompt::Error& e) {
    return set_error(status_of(e.kind()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return set_error(TTP_ERR_CONFIG, std::string("[json] ") + e.what());
  } catch (const std::bad_alloc&) {
    return set_error(TTP_ERR_CAPACITY, "[c_api] out of memory");
  } catch (const std::exception& e) {
    return set_error(TTP_ERR_INTERNAL, std::string("[c_api] ") + e.what());
  } catch (...) {
    return set_error(TTP_ERR_INTERNAL, "[c_api] unknown exception");
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nlohmann::json parse_json(const char* text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    ttprompt::fail(ttprompt::ErrorKind::Config, "c_api", std::string("invalid JSON: ") + e.what());
  }
}

ttprompt::ExperimentConfig parse_config(const char* text) {
  return ttprompt::config_from_json(parse_json(text));
}

ttp_status null_argument(const char* what) {
  return set_error(TTP_ERR_ARGUMENT, std::string("[c_api] null ") + what);
}

}  // namespace

extern "C" {

const char* ttp_version(void) { return "0.1.0"; }

const char* ttp_last_error(void) { return last_error.c_str(); }

const char* ttp_status_name(ttp_status status) {
  switch (status) {
    case TTP_OK: return "ok";
    case TTP_ERR_CONFIG: return "config";
    case TTP_ERR_SHAPE: return "shape";
    case TTP_ERR_VALIDATION: return "validation";
    case TTP_ERR_CAPACITY: return "capacity";
    case TTP_ERR_NUMERIC: return "numeric";
    case TTP_ERR_IO: return "io";
    case TTP_ERR_INTERNAL: return "internal";
    case TTP_ERR_ARGUMENT: return "argument";
  }
  return "unknown";
}

void ttp_free_string(char* text) { std::free(text); }

ttp_status ttp_config_canonical(const char* config_json, char** out_json) {
  if (!config_json) return null_argument("config");
  if (!out_json) return null_argument("output");
  return guarded([&] {
    *out_json = copy_string(ttprompt::config_to_json(parse_config(config_json)).dump(2));
    return TTP_OK;
  });
}

ttp_status ttp_config_override(const char* config_json, const char* assignment, char** out_json) {
  if (!config_json) return null_argument("config");
  if (!assignment) return null_argument("assignment");
  if (!out_json) return null_argument("output");
  return guarded([&] {
    nlohmann::json doc = parse_json(config_json);
    ttprompt::apply_override(doc, assignment);
    *out_json = copy_string(doc.dump());
    return TTP_OK;
  });
}

ttp_status ttp_gen_data(const char* spec_json, const char* out_dir, int csv) {
  if (!spec_json) return null_argument("spec");
  if (!out_dir) return null_argument("output directory");
  return guarded([&] {
    const ttprompt::Dataset ds =
        ttprompt::generate_synthetic(ttprompt::synthetic_from_json(parse_json(spec_json)));
    ttprompt::save_dataset(ds, out_dir,
                           csv ? ttprompt::FeatureEncoding::Csv : ttprompt::FeatureEncoding::Binary);
    return TTP_OK;
  });
}

ttp_status ttp_experiment_create(const char* config_json, ttp_experiment** out) {
  if (!config_json) return null_argument("config");
  if (!out) return null_argument("output");
  *out = nullptr;
  return guarded([&] {
    *out = new ttp_experiment{parse_config(config_json), std::nullopt};
    return TTP_OK;
  });
}

ttp_status ttp_experiment_run(ttp_experiment* experiment) {
  if (!experiment) return null_argument("experiment");
  return guarded([&] {
    experiment->result = ttprompt::run_experiment(experiment->config);
    return TTP_OK;
  });
}

ttp_status ttp_experiment_report_json(const ttp_experiment* experiment, char** out_json) {
  if (!experiment) return null_argument("experiment");
  if (!out_json) return null_argument("output");
  if (!experiment->result) return set_error(TTP_ERR_ARGUMENT, "[c_api] experiment has not run");
  return guarded([&] {
    *out_json = copy_string(ttprompt::report_json(experiment->config, *experiment->result).dump(2));
    return TTP_OK;
  });
}

ttp_status ttp_experiment_timing_json(const ttp_experiment* experiment, char** out_json) {
  if (!experiment) return null_argument("experiment");
  if (!out_json) return null_argument("output");
  if (!experiment->result) return set_error(TTP_ERR_ARGUMENT, "[c_api] experiment has not run");
  return guarded([&] {
    *out_json = copy_string(ttprompt::timing_json(*experiment->result).dump(2));
    return TTP_OK;
  });
}

ttp_status ttp_experiment_save_checkpoint(const ttp_experiment* experiment, const char* path) {
  if (!experiment) return null_argument("experiment");
  if (!path) return null_argument("path");
  if (!experiment->result) return set_error(TTP_ERR_ARGUMENT, "[c_api] experiment has not run");
  return guarded([&] {
    const ttprompt::SeedRun& run = experiment->result->runs.front();
    ttprompt::save_checkpoint(path, experiment->config, run.seed, run.plan, *run.model);
    return TTP_OK;
  });
}

void ttp_experiment_destroy(ttp_experiment* experiment) { delete experiment; }

ttp_status ttp_evaluate_checkpoint(const char* path, char** out_json) {
  if (!path) return null_argument("path");
  if (!out_json) return null_argument("output");
  return guarded([&] {
    const ttprompt::Checkpoint ck = ttprompt::load_checkpoint(path);
    const ttprompt::PreparedData data = ttprompt::prepare_data(ck.config, ck.seed);
    if (data.plan.class_sets != ck.plan.class_sets) {
      ttprompt::fail(ttprompt::ErrorKind::Validation, "c_api",
                     "class plan rebuilt from the checkpoint seed differs from the stored plan");
    }
    const auto metrics = ttprompt::evaluate_all(ck.model, data, ck.config);
    nlohmann::ordered_json j;
    j["format"] = "ttprompt-eval";
    j["config_hash"] = ttprompt::config_hash(ck.config);
    j["seed"] = ck.seed;
    nlohmann::ordered_json sessions = nlohmann::ordered_json::array();
    double sum = 0.0;
    for (std::size_t t = 0; t < metrics.size(); ++t) {
      nlohmann::ordered_json e;
      e["session"] = t + 1;
      e["mAP"] = metrics[t].map;
      e["CF1"] = metrics[t].cf1;
      e["OF1"] = metrics[t].of1;
      e["evaluated_classes"] = metrics[t].evaluated_classes;
      e["skipped_classes"] = metrics[t].skipped_classes;
      sessions.push_back(std::move(e));
      sum += metrics[t].map;
    }
    j["sessions"] = std::move(sessions);
    j["average_mAP"] = metrics.empty() ? 0.0 : sum / static_cast<double>(metrics.size());
    j["last_mAP"] = metrics.empty() ? 0.0 : metrics.back().map;
    *out_json = copy_string(j.dump(2));
    return TTP_OK;
  });
}

ttp_status ttp_param_table(const char* config_json, char** out_json) {
  if (!config_json) return null_argument("config");
  if (!out_json) return null_argument("output");
  return guarded([&] {
    *out_json = copy_string(ttprompt::param_table(parse_config(config_json)).dump(2));
    return TTP_OK;
  });
}

ttp_status ttp_gradcheck(const char* config_json, char** out_json, int* passed) {
  if (!config_json) return null_argument("config");
  if (!out_json) return null_argument("output");
  return guarded([&] {
    const ttprompt::ExperimentConfig config = parse_config(config_json);
    ttprompt::GradcheckOptions options;
    options.step = config.gradcheck_step;
    options.tolerance = config.gradcheck_tolerance;
    options.seed = config.seeds.front();
    options.alpha = config.alpha;
    options.weighted_positive_term = config.weighted_positive_term;
    options.corrupt_block = config.gradcheck_corrupt_block;
    const ttprompt::GradcheckReport report = ttprompt::run_gradcheck(options);
    if (passed) *passed = report.pass ? 1 : 0;
    nlohmann::ordered_json j = ttprompt::gradcheck_json(report);
    j["config_hash"] = ttprompt::config_hash(config);
    j["seed"] = options.seed;
    *out_json = copy_string(j.dump(2));
    return TTP_OK;
  });
}

ttp_status ttp_sweep(const char* config_json, char** out_json) {
  if (!config_json) return null_argument("config");
  if (!out_json) return null_argument("output");
  return guarded([&] {
    *out_json = copy_string(ttprompt::run_sweep(parse_config(config_json)).dump(2));
    return TTP_OK;
  });
}

}  // extern "C"
