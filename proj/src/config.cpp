// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttprompt/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ttprompt/error.hpp"

namespace ttprompt {
namespace {

constexpr std::string_view kModule = "config";
using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void bad_type(const std::string& key, const char* expected) {
  fail(ErrorKind::Config, kModule, "key '" + key + "' must be " + expected);
}

void read(const json& doc, const std::string& key, std::size_t& out) {
  if (!doc.contains(key)) return;
  const json& v = doc.at(key);
  if (!v.is_number_unsigned()) bad_type(key, "a non-negative integer");
  out = v.get<std::size_t>();
}

void read(const json& doc, const std::string& key, double& out) {
  if (!doc.contains(key)) return;
  const json& v = doc.at(key);
  if (!v.is_number()) bad_type(key, "a number");
  out = v.get<double>();
}

void read(const json& doc, const std::string& key, bool& out) {
  if (!doc.contains(key)) return;
  const json& v = doc.at(key);
  if (!v.is_boolean()) bad_type(key, "true or false");
  out = v.get<bool>();
}

void read(const json& doc, const std::string& key, std::string& out) {
  if (!doc.contains(key)) return;
  const json& v = doc.at(key);
  if (!v.is_string()) bad_type(key, "a string");
  out = v.get<std::string>();
}

template <typename T>
void read(const json& doc, const std::string& key, std::vector<T>& out) {
  if (!doc.contains(key)) return;
  const json& v = doc.at(key);
  if (!v.is_array()) bad_type(key, "an array of non-negative integers");
  out.clear();
  for (const json& e : v) {
    if (!e.is_number_unsigned()) bad_type(key, "an array of non-negative integers");
    out.push_back(e.get<T>());
  }
}

void reject_unknown(const json& doc, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) {
      fail(ErrorKind::Config, kModule, "unknown key '" + key + "'" + where);
    }
  }
}

const std::set<std::string> kSyntheticKeys = {"samples", "views", "dims", "classes",
                                              "labels_per_sample", "cluster_separation", "noise",
                                              "seed"};

const std::set<std::string> kKeys = {"seeds",
                                     "dataset",
                                     "synthetic",
                                     "val_fraction",
                                     "test_fraction",
                                     "prompt_dim",
                                     "layers",
                                     "heads",
                                     "factors",
                                     "tt_rank",
                                     "tt_ranks",
                                     "bank",
                                     "sessions",
                                     "base_classes",
                                     "missing_rate",
                                     "epochs",
                                     "patience",
                                     "batch_size",
                                     "lr",
                                     "lambda",
                                     "alpha",
                                     "dcl_pattern_subsample",
                                     "weighted_positive_term",
                                     "train_ept_every_session",
                                     "ablate_prompts",
                                     "params_n_min",
                                     "params_n_max",
                                     "sweep_factors",
                                     "sweep_ranks",
                                     "gradcheck_step",
                                     "gradcheck_tolerance",
                                     "gradcheck_corrupt_block"};

}  // namespace

void ExperimentConfig::validate() const {
  if (seeds.empty()) fail(ErrorKind::Config, kModule, "seeds must list at least one seed");
  if (dataset.empty()) synthetic.validate();
  if (!(val_fraction >= 0.0) || !(test_fraction > 0.0) || val_fraction + test_fraction >= 1.0) {
    fail(ErrorKind::Config, kModule,
         "split fractions need test > 0, val >= 0 and val + test < 1");
  }
  if (prompt_dim == 0 || prompt_dim % 2 != 0) {
    fail(ErrorKind::Config, kModule,
         "prompt_dim must be positive and even, got " + std::to_string(prompt_dim));
  }
  if (layers == 0) fail(ErrorKind::Config, kModule, "layers must be positive");
  if (heads == 0 || (prompt_dim / 2) % heads != 0) {
    fail(ErrorKind::Config, kModule,
         "heads must divide the model width prompt_dim / 2 = " + std::to_string(prompt_dim / 2));
  }
  if (factors == 0) fail(ErrorKind::Config, kModule, "factors must be positive");
  if (tt_rank == 0) fail(ErrorKind::Config, kModule, "tt_rank must be positive");
  if (sessions == 0) fail(ErrorKind::Config, kModule, "sessions must be positive");
  if (base_classes == 0) fail(ErrorKind::Config, kModule, "base_classes must be positive");
  if (dataset.empty()) {
    const std::size_t c = synthetic.classes;
    if (base_classes > c) {
      fail(ErrorKind::Config, kModule, "base_classes exceeds the synthetic class count");
    }
    if (sessions > 1 && (c - base_classes) % (sessions - 1) != 0) {
      fail(ErrorKind::Config, kModule,
           std::to_string(c - base_classes) + " incremental classes do not divide into " +
               std::to_string(sessions - 1) + " sessions (remainder " +
               std::to_string((c - base_classes) % (sessions - 1)) + ")");
    }
    if (sessions == 1 && base_classes != c) {
      fail(ErrorKind::Config, kModule, "a single session must hold every class");
    }
  }
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) {
    fail(ErrorKind::Config, kModule, "missing_rate must lie in [0, 1)");
  }
  if (epochs == 0) fail(ErrorKind::Config, kModule, "epochs must be positive");
  if (batch_size == 0) fail(ErrorKind::Config, kModule, "batch_size must be positive");
  if (!(lr > 0.0)) fail(ErrorKind::Config, kModule, "lr must be positive");
  if (!(lambda >= 0.0)) fail(ErrorKind::Config, kModule, "lambda must be non-negative");
  if (!(alpha > 0.0)) fail(ErrorKind::Config, kModule, "alpha must be positive");
  if (params_n_min == 0 || params_n_min > params_n_max || params_n_max > 62) {
    fail(ErrorKind::Config, kModule, "params range needs 1 <= params_n_min <= params_n_max <= 62");
  }
  if (sweep_factors.empty() || sweep_ranks.empty()) {
    fail(ErrorKind::Config, kModule, "sweep grid must be nonempty");
  }
  for (std::size_t v : sweep_factors) {
    if (v == 0) fail(ErrorKind::Config, kModule, "sweep_factors entries must be positive");
  }
  for (std::size_t v : sweep_ranks) {
    if (v == 0) fail(ErrorKind::Config, kModule, "sweep_ranks entries must be positive");
  }
  if (!(gradcheck_step > 0.0) || !(gradcheck_tolerance > 0.0)) {
    fail(ErrorKind::Config, kModule, "gradcheck step and tolerance must be positive");
  }
}

ModelDims ExperimentConfig::model_dims(std::vector<std::size_t> view_dims) const {
  ModelDims dims;
  dims.view_dims = std::move(view_dims);
  dims.prompt_dim = prompt_dim;
  dims.layers = layers;
  dims.heads = heads;
  dims.factors = factors;
  dims.tt_ranks = tt_ranks.empty() ? EptBank::uniform_ranks(dims.views(), tt_rank) : tt_ranks;
  dims.bank = bank;
  dims.validate();
  return dims;
}

TrainOptions ExperimentConfig::train_options() const {
  TrainOptions t;
  t.epochs = epochs;
  t.patience = patience;
  t.batch_size = batch_size;
  t.adam.lr = lr;
  t.loss.lambda = lambda;
  t.loss.dcl.alpha = alpha;
  t.loss.dcl.weighted_positive_term = weighted_positive_term;
  t.loss.dcl_pattern_subsample = dcl_pattern_subsample;
  t.loss.ablate_prompts = ablate_prompts;
  t.train_ept_every_session = train_ept_every_session;
  return t;
}

SyntheticSpec synthetic_from_json(const json& s) {
  if (!s.is_object()) bad_type("synthetic", "an object");
  reject_unknown(s, kSyntheticKeys, " in 'synthetic'");
  SyntheticSpec spec;
  read(s, "samples", spec.samples);
  read(s, "views", spec.views);
  read(s, "dims", spec.dims);
  read(s, "classes", spec.classes);
  read(s, "labels_per_sample", spec.labels_per_sample);
  read(s, "cluster_separation", spec.cluster_separation);
  read(s, "noise", spec.noise);
  read(s, "seed", spec.seed);
  return spec;
}

ExperimentConfig config_from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorKind::Config, kModule, "config must be a JSON object");
  reject_unknown(doc, kKeys, "");
  ExperimentConfig c;
  read(doc, "seeds", c.seeds);
  read(doc, "dataset", c.dataset);
  if (doc.contains("synthetic")) c.synthetic = synthetic_from_json(doc.at("synthetic"));
  read(doc, "val_fraction", c.val_fraction);
  read(doc, "test_fraction", c.test_fraction);
  read(doc, "prompt_dim", c.prompt_dim);
  read(doc, "layers", c.layers);
  read(doc, "heads", c.heads);
  read(doc, "factors", c.factors);
  read(doc, "tt_rank", c.tt_rank);
  read(doc, "tt_ranks", c.tt_ranks);
  if (doc.contains("bank")) {
    std::string name;
    read(doc, "bank", name);
    try {
      c.bank = parse_bank_kind(name);
    } catch (const Error& e) {
      fail(ErrorKind::Config, kModule, e.what());
    }
  }
  read(doc, "sessions", c.sessions);
  read(doc, "base_classes", c.base_classes);
  read(doc, "missing_rate", c.missing_rate);
  read(doc, "epochs", c.epochs);
  read(doc, "patience", c.patience);
  read(doc, "batch_size", c.batch_size);
  read(doc, "lr", c.lr);
  read(doc, "lambda", c.lambda);
  read(doc, "alpha", c.alpha);
  read(doc, "dcl_pattern_subsample", c.dcl_pattern_subsample);
  read(doc, "weighted_positive_term", c.weighted_positive_term);
  read(doc, "train_ept_every_session", c.train_ept_every_session);
  read(doc, "ablate_prompts", c.ablate_prompts);
  read(doc, "params_n_min", c.params_n_min);
  read(doc, "params_n_max", c.params_n_max);
  read(doc, "sweep_factors", c.sweep_factors);
  read(doc, "sweep_ranks", c.sweep_ranks);
  read(doc, "gradcheck_step", c.gradcheck_step);
  read(doc, "gradcheck_tolerance", c.gradcheck_tolerance);
  read(doc, "gradcheck_corrupt_block", c.gradcheck_corrupt_block);
  c.validate();
  return c;
}

ordered_json config_to_json(const ExperimentConfig& c) {
  ordered_json s;
  s["samples"] = c.synthetic.samples;
  s["views"] = c.synthetic.views;
  s["dims"] = c.synthetic.dims;
  s["classes"] = c.synthetic.classes;
  s["labels_per_sample"] = c.synthetic.labels_per_sample;
  s["cluster_separation"] = c.synthetic.cluster_separation;
  s["noise"] = c.synthetic.noise;
  s["seed"] = c.synthetic.seed;

  ordered_json j;
  j["seeds"] = c.seeds;
  j["dataset"] = c.dataset;
  j["synthetic"] = s;
  j["val_fraction"] = c.val_fraction;
  j["test_fraction"] = c.test_fraction;
  j["prompt_dim"] = c.prompt_dim;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["factors"] = c.factors;
  j["tt_rank"] = c.tt_rank;
  j["tt_ranks"] = c.tt_ranks;
  j["bank"] = to_string(c.bank);
  j["sessions"] = c.sessions;
  j["base_classes"] = c.base_classes;
  j["missing_rate"] = c.missing_rate;
  j["epochs"] = c.epochs;
  j["patience"] = c.patience;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["lambda"] = c.lambda;
  j["alpha"] = c.alpha;
  j["dcl_pattern_subsample"] = c.dcl_pattern_subsample;
  j["weighted_positive_term"] = c.weighted_positive_term;
  j["train_ept_every_session"] = c.train_ept_every_session;
  j["ablate_prompts"] = c.ablate_prompts;
  j["params_n_min"] = c.params_n_min;
  j["params_n_max"] = c.params_n_max;
  j["sweep_factors"] = c.sweep_factors;
  j["sweep_ranks"] = c.sweep_ranks;
  j["gradcheck_step"] = c.gradcheck_step;
  j["gradcheck_tolerance"] = c.gradcheck_tolerance;
  j["gradcheck_corrupt_block"] = c.gradcheck_corrupt_block;
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, kModule, "cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, kModule, "config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    fail(ErrorKind::Config, kModule, "override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  const auto dot = key.find('.');
  if (dot == std::string::npos) {
    doc[key] = value;
  } else {
    doc[key.substr(0, dot)][key.substr(dot + 1)] = value;
  }
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = config_to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ttprompt
