// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttprompt/data.hpp"
#include "ttprompt/ept.hpp"
#include "ttprompt/incremental.hpp"
#include "ttprompt/transformer.hpp"

namespace ttprompt {

/// Everything a run needs. Stored as one flat JSON object; the synthetic
/// data spec is the only nested object.
struct ExperimentConfig {
  std::vector<std::uint64_t> seeds{1};

  /// Dataset manifest path; when empty the synthetic spec is generated.
  std::string dataset;
  SyntheticSpec synthetic;
  double val_fraction = 0.15;
  double test_fraction = 0.15;

  std::size_t prompt_dim = 128;
  std::size_t layers = 3;
  std::size_t heads = 4;
  std::size_t factors = 4;
  std::size_t tt_rank = 2;
  /// Explicit r_0..r_n; overrides tt_rank when non-empty.
  std::vector<std::size_t> tt_ranks;
  BankKind bank = BankKind::Ept;

  std::size_t sessions = 3;
  std::size_t base_classes = 4;
  double missing_rate = 0.3;

  std::size_t epochs = 50;
  std::size_t patience = 10;
  std::size_t batch_size = 128;
  double lr = 0.02;
  double lambda = 0.001;
  double alpha = 1.0;
  std::size_t dcl_pattern_subsample = 128;
  bool weighted_positive_term = false;
  bool train_ept_every_session = false;
  bool ablate_prompts = false;

  std::size_t params_n_min = 1;
  std::size_t params_n_max = 10;
  std::vector<std::size_t> sweep_factors{1, 2, 4, 8};
  std::vector<std::size_t> sweep_ranks{1, 2, 4, 8};

  double gradcheck_step = 1e-5;
  double gradcheck_tolerance = 1e-4;
  /// Test hook: scales the analytic gradient of the named block by 1.5.
  std::string gradcheck_corrupt_block;

  /// Range and consistency checks that need no data.
  void validate() const;

  ModelDims model_dims(std::vector<std::size_t> view_dims) const;
  TrainOptions train_options() const;
};

/// Fills defaults for absent keys; rejects unknown keys and wrong types.
ExperimentConfig config_from_json(const nlohmann::json& doc);
/// Reads the nested synthetic spec object; absent keys keep defaults.
SyntheticSpec synthetic_from_json(const nlohmann::json& doc);

/// Canonical form: every key, fixed order.
nlohmann::ordered_json config_to_json(const ExperimentConfig& config);

/// Reads a JSON config file. Io error when the file cannot be opened.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies `key=value`; the value is parsed as JSON, falling back to a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// FNV-1a 64 over the canonical dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

}  // namespace ttprompt
