// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace ttprompt {

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 1;
  /// DCL weight; large enough that its path is visible in the bank gradients.
  double lambda = 0.5;
  double alpha = 1.0;
  bool weighted_positive_term = false;
  /// Test hook: scale this block's analytic gradient by 1.5.
  std::string corrupt_block;
};

struct GradBlock {
  std::string name;
  /// 1 for the session-1 schedule, 2 for the session-2 schedule.
  int phase = 1;
  std::size_t elements = 0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
  double rel_error = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradBlock> blocks;
  double step = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// ||a - f|| / max(||a||, ||f||, 1e-300)
double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

/// Analytic vs central-difference gradients on a tiny model (2 views, d=8,
/// one layer, one head, k=2, R=2) at a randomized parameter point, for every
/// block trainable under the session-1 and session-2 schedules, plus the
/// contrastive loss's own prompt and view-weight gradients.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

nlohmann::ordered_json gradcheck_json(const GradcheckReport& report);

}  // namespace ttprompt
