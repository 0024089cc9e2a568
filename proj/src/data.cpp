// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttprompt/data.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ttprompt/error.hpp"

namespace ttprompt {

namespace {
constexpr const char* kModule = "data";
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

void write_f64(std::ostream& out, std::span<const double> values) {
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    bits = to_le(bits);
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
}

std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, kModule, "cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

void require_bytes(const fs::path& path, std::size_t actual, std::size_t expected) {
  if (actual != expected) {
    fail(ErrorKind::Validation, kModule,
         path.string() + " holds " + std::to_string(actual) + " bytes, manifest declares " +
             std::to_string(expected));
  }
}

// Knuth's product method; fine for the small means used here.
std::size_t poisson(double mean, Rng& rng) {
  if (mean <= 0.0) return 0;
  const double limit = std::exp(-mean);
  std::size_t k = 0;
  double product = rng.uniform();
  while (product > limit) {
    ++k;
    product *= rng.uniform();
  }
  return k;
}

void open_for_write(std::ofstream& out, const fs::path& path, std::ios::openmode mode) {
  out.open(path, mode);
  if (!out) fail(ErrorKind::Io, kModule, "cannot write " + path.string());
}
}  // namespace

SampleView Dataset::view(std::size_t sample) const {
  SampleView s;
  s.features.reserve(views());
  for (std::size_t v = 0; v < views(); ++v) s.features.push_back(features[v].row(sample));
  s.pattern = indicators[sample];
  return s;
}

void Dataset::validate() const {
  const std::size_t n = samples();
  if (features.size() != view_dims.size()) {
    fail(ErrorKind::Validation, kModule, "feature table count differs from view count");
  }
  for (std::size_t v = 0; v < views(); ++v) {
    if (features[v].rows() != n || features[v].cols() != view_dims[v]) {
      fail(ErrorKind::Validation, kModule,
           "view " + std::to_string(v) + " features have shape " + features[v].shape_string());
    }
  }
  if (labels.size() != n * classes) {
    fail(ErrorKind::Validation, kModule, "label table size does not match N x C");
  }
  for (auto b : labels) {
    if (b > 1) fail(ErrorKind::Validation, kModule, "labels must be 0 or 1");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (indicators[i].views() != views()) {
      fail(ErrorKind::Validation, kModule, "indicator row " + std::to_string(i) + " has wrong length");
    }
    if (!indicators[i].any_observed()) {
      fail(ErrorKind::Validation, kModule,
           "sample " + std::to_string(i) + " has no observed view");
    }
  }
  if (!splits.empty() && splits.size() != n) {
    fail(ErrorKind::Validation, kModule, "split tags do not cover every sample");
  }
}

std::vector<std::size_t> SyntheticSpec::resolved_dims() const {
  if (dims.size() == 1) return std::vector<std::size_t>(views, dims.front());
  return dims;
}

void SyntheticSpec::validate() const {
  if (samples == 0) fail(ErrorKind::Validation, kModule, "synthetic spec needs samples >= 1");
  if (views == 0) fail(ErrorKind::Validation, kModule, "synthetic spec needs views >= 1");
  if (dims.empty() || (dims.size() != 1 && dims.size() != views)) {
    fail(ErrorKind::Validation, kModule, "dims must list one size or one size per view");
  }
  for (std::size_t d : dims) {
    if (d == 0) fail(ErrorKind::Validation, kModule, "feature dims must be positive");
  }
  if (classes == 0) fail(ErrorKind::Validation, kModule, "synthetic spec needs classes >= 1");
  if (!(labels_per_sample >= 1.0) || labels_per_sample > static_cast<double>(classes)) {
    fail(ErrorKind::Validation, kModule,
         "labels_per_sample must lie in [1, classes]");
  }
  if (!(cluster_separation >= 0.0) || !(noise >= 0.0)) {
    fail(ErrorKind::Validation, kModule, "separation and noise must be non-negative");
  }
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Dataset ds;
  ds.view_dims = spec.resolved_dims();
  ds.classes = spec.classes;

  // centroids[v] is C x d_v
  std::vector<Matrix> centroids;
  for (std::size_t v = 0; v < spec.views; ++v) {
    centroids.push_back(init_normal(spec.classes, ds.view_dims[v], 1.0, rng));
    for (double& x : centroids.back().values()) x *= spec.cluster_separation;
  }

  ds.labels.assign(spec.samples * spec.classes, 0);
  std::vector<std::size_t> order(spec.classes);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    std::size_t count = 1 + poisson(spec.labels_per_sample - 1.0, rng);
    count = std::min(count, spec.classes);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // partial Fisher-Yates: the first `count` entries are a uniform subset
    for (std::size_t j = 0; j < count; ++j) {
      const std::size_t pick = j + static_cast<std::size_t>(rng.below(spec.classes - j));
      std::swap(order[j], order[pick]);
      ds.labels[i * spec.classes + order[j]] = 1;
    }
  }

  for (std::size_t v = 0; v < spec.views; ++v) {
    Matrix feats(spec.samples, ds.view_dims[v]);
    for (std::size_t i = 0; i < spec.samples; ++i) {
      auto row = feats.row(i);
      std::size_t positives = 0;
      for (std::size_t c = 0; c < spec.classes; ++c) {
        if (!ds.label(i, c)) continue;
        ++positives;
        const auto centroid = centroids[v].row(c);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += centroid[j];
      }
      for (std::size_t j = 0; j < row.size(); ++j) {
        row[j] = row[j] / static_cast<double>(positives) + rng.normal(0.0, spec.noise);
      }
    }
    ds.features.push_back(std::move(feats));
  }
  ds.indicators.assign(spec.samples, MissingPattern::all_observed(spec.views));
  return ds;
}

void assign_splits(Dataset& dataset, double val_fraction, double test_fraction, Rng& rng) {
  if (val_fraction < 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0) {
    fail(ErrorKind::Config, kModule, "split fractions must be non-negative and leave training data");
  }
  const std::size_t n = dataset.samples();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  dataset.splits.assign(n, SplitTag::Train);
  for (std::size_t j = 0; j < n; ++j) {
    if (j < n_test) {
      dataset.splits[order[j]] = SplitTag::Test;
    } else if (j < n_test + n_val) {
      dataset.splits[order[j]] = SplitTag::Val;
    }
  }
}

void save_dataset(const Dataset& dataset, const fs::path& dir, FeatureEncoding encoding) {
  dataset.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, kModule, "cannot create " + dir.string() + ": " + ec.message());

  json manifest;
  manifest["format"] = "ttprompt-dataset";
  manifest["version"] = 1;
  manifest["samples"] = dataset.samples();
  manifest["classes"] = dataset.classes;
  manifest["views"] = dataset.views();
  manifest["view_dims"] = dataset.view_dims;
  manifest["feature_encoding"] = encoding == FeatureEncoding::Binary ? "f64le" : "csv";
  json files = json::array();
  for (std::size_t v = 0; v < dataset.views(); ++v) {
    const std::string name =
        "view" + std::to_string(v) + (encoding == FeatureEncoding::Binary ? ".f64" : ".csv");
    files.push_back(name);
    std::ofstream out;
    if (encoding == FeatureEncoding::Binary) {
      open_for_write(out, dir / name, std::ios::binary | std::ios::trunc);
      write_f64(out, dataset.features[v].values());
    } else {
      if (dataset.features[v].size() > kMaxCsvValues) {
        fail(ErrorKind::Capacity, kModule, "csv features are limited to 1e6 values per view");
      }
      open_for_write(out, dir / name, std::ios::trunc);
      out.precision(17);
      for (std::size_t i = 0; i < dataset.samples(); ++i) {
        const auto row = dataset.features[v].row(i);
        for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << row[j];
        out << '\n';
      }
    }
    if (!out) fail(ErrorKind::Io, kModule, "failed writing " + (dir / name).string());
  }
  manifest["features"] = files;
  manifest["labels"] = "labels.u8";
  manifest["indicators"] = "indicators.u8";
  {
    std::ofstream out;
    open_for_write(out, dir / "labels.u8", std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(dataset.labels.data()),
              static_cast<std::streamsize>(dataset.labels.size()));
  }
  {
    std::ofstream out;
    open_for_write(out, dir / "indicators.u8", std::ios::binary | std::ios::trunc);
    for (const auto& p : dataset.indicators) {
      out.write(reinterpret_cast<const char*>(p.bits().data()),
                static_cast<std::streamsize>(p.views()));
    }
  }
  std::ofstream out;
  open_for_write(out, dir / "manifest.json", std::ios::trunc);
  out << manifest.dump(2) << '\n';
}

Dataset load_dataset(const fs::path& manifest_path) {
  json manifest;
  {
    std::ifstream in(manifest_path);
    if (!in) fail(ErrorKind::Io, kModule, "cannot open manifest " + manifest_path.string());
    try {
      manifest = json::parse(in);
    } catch (const json::exception& e) {
      fail(ErrorKind::Validation, kModule,
           "malformed manifest " + manifest_path.string() + ": " + e.what());
    }
  }
  const fs::path base = manifest_path.parent_path();
  Dataset ds;
  std::size_t samples = 0, views = 0;
  std::string encoding;
  std::vector<std::string> feature_files;
  std::string labels_file, indicators_file;
  try {
    samples = manifest.at("samples").get<std::size_t>();
    views = manifest.at("views").get<std::size_t>();
    ds.classes = manifest.at("classes").get<std::size_t>();
    ds.view_dims = manifest.at("view_dims").get<std::vector<std::size_t>>();
    encoding = manifest.value("feature_encoding", std::string("f64le"));
    feature_files = manifest.at("features").get<std::vector<std::string>>();
    labels_file = manifest.at("labels").get<std::string>();
    indicators_file = manifest.at("indicators").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Validation, kModule, "manifest field error: " + std::string(e.what()));
  }
  if (ds.view_dims.size() != views || feature_files.size() != views) {
    fail(ErrorKind::Validation, kModule, "manifest view count disagrees with view_dims/features");
  }
  if (encoding != "f64le" && encoding != "csv") {
    fail(ErrorKind::Validation, kModule, "unknown feature encoding '" + encoding + "'");
  }

  for (std::size_t v = 0; v < views; ++v) {
    const fs::path path = base / feature_files[v];
    const std::size_t count = samples * ds.view_dims[v];
    if (encoding == "f64le") {
      const std::vector<char> bytes = read_file(path);
      require_bytes(path, bytes.size(), count * sizeof(double));
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, bytes.data() + i * sizeof bits, sizeof bits);
        bits = to_le(bits);
        std::memcpy(&values[i], &bits, sizeof bits);
      }
      ds.features.emplace_back(samples, ds.view_dims[v], std::move(values));
    } else {
      if (count > kMaxCsvValues) {
        fail(ErrorKind::Capacity, kModule, "csv features are limited to 1e6 values per view");
      }
      std::ifstream in(path);
      if (!in) fail(ErrorKind::Io, kModule, "cannot open " + path.string());
      std::vector<double> values;
      values.reserve(count);
      std::string line;
      std::size_t rows = 0;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream cells(line);
        std::string cell;
        std::size_t cols = 0;
        while (std::getline(cells, cell, ',')) {
          try {
            values.push_back(std::stod(cell));
          } catch (const std::exception&) {
            fail(ErrorKind::Validation, kModule,
                 path.string() + ": bad number '" + cell + "' on row " + std::to_string(rows));
          }
          ++cols;
        }
        if (cols != ds.view_dims[v]) {
          fail(ErrorKind::Validation, kModule,
               path.string() + ": row " + std::to_string(rows) + " has " + std::to_string(cols) +
                   " values, manifest declares " + std::to_string(ds.view_dims[v]));
        }
        ++rows;
      }
      if (rows != samples) {
        fail(ErrorKind::Validation, kModule,
             path.string() + " holds " + std::to_string(rows) + " rows, manifest declares " +
                 std::to_string(samples));
      }
      ds.features.emplace_back(samples, ds.view_dims[v], std::move(values));
    }
  }

  const fs::path labels_path = base / labels_file;
  const std::vector<char> label_bytes = read_file(labels_path);
  require_bytes(labels_path, label_bytes.size(), samples * ds.classes);
  ds.labels.assign(label_bytes.begin(), label_bytes.end());

  const fs::path ind_path = base / indicators_file;
  const std::vector<char> ind_bytes = read_file(ind_path);
  require_bytes(ind_path, ind_bytes.size(), samples * views);
  ds.indicators.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    std::vector<std::uint8_t> bits(ind_bytes.begin() + static_cast<std::ptrdiff_t>(i * views),
                                   ind_bytes.begin() + static_cast<std::ptrdiff_t>((i + 1) * views));
    ds.indicators.emplace_back(std::move(bits));
  }
  ds.validate();
  return ds;
}

}  // namespace ttprompt
