// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ttprompt/config.hpp"
#include "ttprompt/incremental.hpp"
#include "ttprompt/transformer.hpp"

namespace ttprompt {

/// File layout: the 8 magic bytes "TTPCKPT1", the manifest length as a
/// little-endian u64, the JSON manifest, then every tensor as little-endian
/// float64 in manifest order.
inline constexpr char kCheckpointMagic[9] = "TTPCKPT1";

struct Checkpoint {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  SessionPlan plan;
  PromptModel model;
};

std::string checkpoint_bytes(const ExperimentConfig& config, std::uint64_t seed,
                             const SessionPlan& plan, const PromptModel& model);
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ExperimentConfig& config,
                     std::uint64_t seed, const SessionPlan& plan, const PromptModel& model);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ttprompt
