// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

// ttprompt command-line driver. Exit codes: 0 success, 1 runtime failure,
// 2 usage or configuration error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ttprompt/ttprompt.h"

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Top-level config keys that get a mirrored --flag.
const char* const kMirroredKeys[] = {
    "seeds",         "dataset",          "val_fraction",   "test_fraction",
    "prompt_dim",    "layers",           "heads",          "factors",
    "tt_rank",       "tt_ranks",         "bank",           "sessions",
    "base_classes",  "missing_rate",     "epochs",         "patience",
    "batch_size",    "lr",               "lambda",         "alpha",
    "dcl_pattern_subsample",             "weighted_positive_term",
    "train_ept_every_session",           "ablate_prompts", "params_n_min",
    "params_n_max",  "sweep_factors",    "sweep_ranks",    "gradcheck_step",
    "gradcheck_tolerance",               "gradcheck_corrupt_block"};

struct Failure {
  int code;
  std::string message;
};

int exit_code(ttp_status s) { return s == TTP_ERR_CONFIG ? kExitUsage : kExitRuntime; }

void check(ttp_status s, const std::string& what) {
  if (s != TTP_OK) {
    throw Failure{exit_code(s), what + " failed (" + ttp_status_name(s) + "): " + ttp_last_error()};
  }
}

std::string take(char* text) {
  std::string out(text ? text : "");
  ttp_free_string(text);
  return out;
}

std::string read_text(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw Failure{kExitUsage, std::string(what) + " not found: " + path};
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kExitUsage, std::string("cannot read ") + what + ": " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{kExitRuntime, "cannot write " + path};
  out << text << '\n';
  if (!out) throw Failure{kExitRuntime, "write failed for " + path};
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << '\n';
  } else {
    write_text(path, text);
  }
}

/// Config file (or "{}") plus mirrored flags plus --set overrides, in that order.
struct ConfigInputs {
  std::string path;
  std::map<std::string, std::string> flags;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd, bool required) {
    auto* opt = cmd->add_option("-c,--config", path, "JSON config file");
    if (required) opt->required();
    for (const char* key : kMirroredKeys) {
      std::string flag = key;
      for (char& ch : flag) ch = ch == '_' ? '-' : ch;
      cmd->add_option("--" + flag, flags[key], std::string("config key ") + key + " (JSON value)");
    }
    cmd->add_option("--set", sets, "override KEY=VALUE (nested: synthetic.KEY=VALUE)");
  }

  std::string resolve() const {
    std::string doc = path.empty() ? "{}" : read_text(path, "config file");
    auto apply = [&](const std::string& assignment) {
      char* out = nullptr;
      check(ttp_config_override(doc.c_str(), assignment.c_str(), &out), "override '" + assignment + "'");
      doc = take(out);
    };
    for (const auto& [key, value] : flags) {
      if (!value.empty()) apply(key + "=" + value);
    }
    for (const std::string& s : sets) apply(s);
    char* canonical = nullptr;
    check(ttp_config_canonical(doc.c_str(), &canonical), "config");
    ttp_free_string(canonical);
    return doc;
  }
};

int cmd_gen_data(const std::string& config_path, const std::vector<std::string>& sets,
                 const std::string& out_dir, bool csv) {
  nlohmann::json spec = nlohmann::json::object();
  if (!config_path.empty()) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(read_text(config_path, "config file"));
    } catch (const nlohmann::json::parse_error& e) {
      throw Failure{kExitUsage, "config file " + config_path + " is not valid JSON: " + e.what()};
    }
    if (doc.contains("synthetic")) spec = doc["synthetic"];
  }
  std::string text = nlohmann::json{{"synthetic", spec}}.dump();
  for (const std::string& s : sets) {
    char* out = nullptr;
    const std::string assignment = s.rfind("synthetic.", 0) == 0 ? s : "synthetic." + s;
    check(ttp_config_override(text.c_str(), assignment.c_str(), &out), "override '" + s + "'");
    text = take(out);
  }
  const std::string spec_text = nlohmann::json::parse(text)["synthetic"].dump();
  check(ttp_gen_data(spec_text.c_str(), out_dir.c_str(), csv ? 1 : 0), "gen-data");
  std::cout << "wrote dataset to " << out_dir << '\n';
  return kExitOk;
}

int cmd_train(const ConfigInputs& in, const std::string& report, const std::string& checkpoint) {
  const std::string doc = in.resolve();
  ttp_experiment* exp = nullptr;
  check(ttp_experiment_create(doc.c_str(), &exp), "config");
  struct Guard {
    ttp_experiment* e;
    ~Guard() { ttp_experiment_destroy(e); }
  } guard{exp};
  check(ttp_experiment_run(exp), "train");
  char* text = nullptr;
  check(ttp_experiment_report_json(exp, &text), "report");
  const std::string report_text = take(text);
  write_text(report, report_text);
  check(ttp_experiment_timing_json(exp, &text), "timing");
  write_text(report + ".timing.json", take(text));
  if (!checkpoint.empty()) check(ttp_experiment_save_checkpoint(exp, checkpoint.c_str()), "checkpoint");

  const auto j = nlohmann::json::parse(report_text);
  std::cout << "report " << report << " (config " << j["config_hash"].get<std::string>() << ")\n";
  for (const auto& run : j["runs"]) {
    std::printf("seed %llu: average mAP %.4f, last mAP %.4f\n",
                static_cast<unsigned long long>(run["seed"].get<std::uint64_t>()),
                run["average_mAP"].get<double>(), run["last_mAP"].get<double>());
  }
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& out) {
  if (!fs::exists(checkpoint)) throw Failure{kExitUsage, "checkpoint not found: " + checkpoint};
  char* text = nullptr;
  check(ttp_evaluate_checkpoint(checkpoint.c_str(), &text), "eval");
  emit(out, take(text));
  return kExitOk;
}

int cmd_params(const ConfigInputs& in, const std::string& out) {
  const std::string doc = in.resolve();
  char* text = nullptr;
  check(ttp_param_table(doc.c_str(), &text), "params");
  const std::string table = take(text);
  if (!out.empty()) write_text(out, table);
  const auto j = nlohmann::json::parse(table);
  std::printf("d=%zu k=%zu R=%zu\n", j["prompt_dim"].get<std::size_t>(),
              j["factors"].get<std::size_t>(), j["tt_rank"].get<std::size_t>());
  std::printf("%4s %12s %12s %22s %12s %12s\n", "n", "ept_exact", "ept_bound", "map", "msp", "epe_p");
  for (const auto& r : j["rows"]) {
    std::printf("%4zu %12llu %12llu %22llu %12llu %12llu\n", r["n"].get<std::size_t>(),
                static_cast<unsigned long long>(r["ept_exact"].get<std::uint64_t>()),
                static_cast<unsigned long long>(r["ept_bound"].get<std::uint64_t>()),
                static_cast<unsigned long long>(r["map"].get<std::uint64_t>()),
                static_cast<unsigned long long>(r["msp"].get<std::uint64_t>()),
                static_cast<unsigned long long>(r["epe_p"].get<std::uint64_t>()));
  }
  const auto& g = j["growth"];
  std::cout << "growth: ept " << g["ept"].get<std::string>();
  if (!g["ept_exact_increment"].is_null()) {
    std::cout << " (+" << g["ept_exact_increment"].get<std::uint64_t>() << " per view)";
  }
  std::cout << "; map " << g["map"].get<std::string>() << '\n';
  return kExitOk;
}

int cmd_gradcheck(const ConfigInputs& in, const std::string& out) {
  const std::string doc = in.resolve();
  char* text = nullptr;
  int passed = 0;
  check(ttp_gradcheck(doc.c_str(), &text, &passed), "gradcheck");
  const std::string report = take(text);
  if (!out.empty()) write_text(out, report);
  const auto j = nlohmann::json::parse(report);
  for (const auto& b : j["blocks"]) {
    std::printf("%-5s phase %d %-18s rel_error %.3e\n", b["pass"].get<bool>() ? "PASS" : "FAIL",
                b["phase"].get<int>(), b["block"].get<std::string>().c_str(),
                b["rel_error"].get<double>());
  }
  std::cout << (passed ? "gradcheck passed" : "gradcheck FAILED") << '\n';
  return passed ? kExitOk : kExitRuntime;
}

int cmd_sweep(const ConfigInputs& in, const std::string& out) {
  const std::string doc = in.resolve();
  char* text = nullptr;
  check(ttp_sweep(doc.c_str(), &text), "sweep");
  const std::string report = take(text);
  if (!out.empty()) write_text(out, report);
  const auto j = nlohmann::json::parse(report);
  std::printf("%7s %5s %10s %12s\n", "factors", "rank", "last_mAP", "param_count");
  for (const auto& c : j["cells"]) {
    std::printf("%7zu %5zu %10.4f %12llu\n", c["factors"].get<std::size_t>(),
                c["rank"].get<std::size_t>(), c["last_mAP"]["mean"].get<double>(),
                static_cast<unsigned long long>(c["param_count"].get<std::uint64_t>()));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ttprompt: prompt-based incomplete multi-view multi-label class-incremental learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ttp_version()));

  std::string gen_config, gen_out;
  std::vector<std::string> gen_sets;
  bool gen_csv = false;
  auto* gen = app.add_subcommand("gen-data", "write a synthetic Gaussian-cluster dataset");
  gen->add_option("-c,--config", gen_config, "config file; its 'synthetic' object is used");
  gen->add_option("-o,--out", gen_out, "output directory")->required();
  gen->add_option("--set", gen_sets, "override a spec key, e.g. samples=500");
  gen->add_flag("--csv", gen_csv, "write features as CSV instead of float64");

  ConfigInputs train_in;
  std::string train_report = "report.json", train_ckpt = "checkpoint.ttp";
  auto* train = app.add_subcommand("train", "run the incremental protocol, write report and checkpoint");
  train_in.attach(train, true);
  train->add_option("-r,--report", train_report, "report path (timing goes to <report>.timing.json)");
  train->add_option("-k,--checkpoint", train_ckpt, "checkpoint path; empty to skip");

  std::string eval_ckpt, eval_out;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on its test split");
  eval->add_option("-k,--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval->add_option("-o,--out", eval_out, "output path (stdout when absent)");

  ConfigInputs params_in;
  std::string params_out;
  auto* params = app.add_subcommand("params", "prompt-bank parameter counts over a range of view counts");
  params_in.attach(params, false);
  params->add_option("-o,--out", params_out, "write the table as JSON");

  ConfigInputs grad_in;
  std::string grad_out;
  auto* grad = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  grad_in.attach(grad, false);
  grad->add_option("-o,--out", grad_out, "write the per-block report as JSON");

  ConfigInputs sweep_in;
  std::string sweep_out;
  auto* sweep = app.add_subcommand("sweep", "run the experiment over a factors x rank grid");
  sweep_in.attach(sweep, true);
  sweep->add_option("-o,--out", sweep_out, "write the grid as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(gen_config, gen_sets, gen_out, gen_csv);
    if (*train) return cmd_train(train_in, train_report, train_ckpt);
    if (*eval) return cmd_eval(eval_ckpt, eval_out);
    if (*params) return cmd_params(params_in, params_out);
    if (*grad) return cmd_gradcheck(grad_in, grad_out);
    if (*sweep) return cmd_sweep(sweep_in, sweep_out);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
