// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ttprompt/ept.hpp"
#include "ttprompt/numcore.hpp"
#include "ttprompt/transformer.hpp"

namespace ttprompt {

enum class SplitTag : std::uint8_t { Train = 0, Val = 1, Test = 2 };

/// Multi-view multi-label samples. Features are stored per view as N x d_v;
/// labels are a 0/1 N x C byte table.
struct Dataset {
  std::vector<std::size_t> view_dims;
  std::vector<Matrix> features;
  std::vector<MissingPattern> indicators;
  std::vector<std::uint8_t> labels;
  std::size_t classes = 0;
  std::vector<SplitTag> splits;

  std::size_t samples() const noexcept { return indicators.size(); }
  std::size_t views() const noexcept { return view_dims.size(); }
  bool label(std::size_t sample, std::size_t cls) const noexcept {
    return labels[sample * classes + cls] != 0;
  }
  SampleView view(std::size_t sample) const;
  /// Checks table sizes, 0/1 labels, and that every indicator observes a view.
  void validate() const;
};

struct SyntheticSpec {
  std::size_t samples = 1200;
  std::size_t views = 6;
  /// One entry per view, or a single entry applied to every view.
  std::vector<std::size_t> dims{32};
  std::size_t classes = 12;
  double labels_per_sample = 2.0;
  double cluster_separation = 2.0;
  double noise = 1.0;
  std::uint64_t seed = 0;

  std::vector<std::size_t> resolved_dims() const;
  void validate() const;
};

/// Gaussian-cluster multi-label data. Each class owns one centroid per view
/// drawn from N(0, separation^2 I); a sample's view features are the mean of
/// its classes' centroids plus N(0, noise^2 I). Label counts are
/// 1 + Poisson(labels_per_sample - 1), capped at the class count. All views
/// are observed.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Assigns train/val/test tags by a seeded shuffle: the first
/// round(test * N) shuffled samples are test, the next round(val * N) val.
void assign_splits(Dataset& dataset, double val_fraction, double test_fraction, Rng& rng);

enum class FeatureEncoding { Binary, Csv };

/// Writes manifest.json plus one payload per view, labels.u8 and
/// indicators.u8 into `dir`. Binary features are little-endian float64.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir,
                  FeatureEncoding encoding = FeatureEncoding::Binary);

/// Reads a manifest and its payloads; rejects any payload whose byte count
/// disagrees with the declared shape.
Dataset load_dataset(const std::filesystem::path& manifest);

inline constexpr std::size_t kMaxCsvValues = 1000000;

}  // namespace ttprompt
