// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttprompt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "ttprompt/error.hpp"

namespace ttprompt {
namespace {

constexpr std::string_view kModule = "checkpoint";
using nlohmann::json;
using nlohmann::ordered_json;

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

void put_u64(std::string& out, std::uint64_t v) {
  v = to_le(v);
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v;
  std::memcpy(&v, p, 8);
  return to_le(v);
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) fail(ErrorKind::Validation, kModule, std::string("manifest lacks '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Validation, kModule, std::string("manifest field '") + key + "': " + e.what());
  }
}

}  // namespace

std::string checkpoint_bytes(const ExperimentConfig& config, std::uint64_t seed,
                             const SessionPlan& plan, const PromptModel& model) {
  const ModelDims& d = model.dims();
  ordered_json m;
  m["format"] = "ttprompt-checkpoint";
  m["version"] = 1;
  m["config"] = config_to_json(config);
  m["seed"] = seed;
  ordered_json p;
  p["total_classes"] = plan.total_classes;
  p["base_classes"] = plan.base_classes;
  p["increment"] = plan.increment;
  p["class_sets"] = plan.class_sets;
  m["plan"] = std::move(p);
  ordered_json dims;
  dims["view_dims"] = d.view_dims;
  dims["prompt_dim"] = d.prompt_dim;
  dims["layers"] = d.layers;
  dims["heads"] = d.heads;
  dims["factors"] = d.factors;
  dims["tt_ranks"] = d.resolved_ranks();
  dims["bank"] = to_string(d.bank);
  m["dims"] = std::move(dims);
  ordered_json tasks = ordered_json::array();
  for (std::size_t t = 0; t < model.task_count(); ++t) tasks.push_back(model.task(t).classes);
  m["task_classes"] = std::move(tasks);

  ordered_json tensors = ordered_json::array();
  std::uint64_t offset = 0;
  const auto params = model.parameters();
  for (const ParamTensor* t : params) {
    ordered_json e;
    e["name"] = t->name;
    e["shape"] = {t->value.rows(), t->value.cols()};
    e["trainable"] = t->trainable;
    e["frozen"] = t->frozen;
    e["offset"] = offset;
    offset += 8 * t->value.size();
    tensors.push_back(std::move(e));
  }
  m["tensors"] = std::move(tensors);

  const std::string manifest = m.dump();
  std::string out(kCheckpointMagic, 8);
  put_u64(out, manifest.size());
  out += manifest;
  out.reserve(out.size() + offset);
  for (const ParamTensor* t : params) {
    for (double v : t->value.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 8, kCheckpointMagic) != 0) {
    fail(ErrorKind::Validation, kModule, "not a checkpoint (bad magic)");
  }
  const std::uint64_t length = get_u64(bytes.data() + 8);
  if (length > bytes.size() - 16) fail(ErrorKind::Validation, kModule, "manifest length exceeds file");
  json m;
  try {
    m = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(length));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Validation, kModule, std::string("manifest is not valid JSON: ") + e.what());
  }
  if (field<std::string>(m, "format") != "ttprompt-checkpoint" || field<int>(m, "version") != 1) {
    fail(ErrorKind::Validation, kModule, "unsupported checkpoint format or version");
  }
  const std::size_t payload_start = 16 + length;
  const std::size_t payload = bytes.size() - payload_start;

  const json& jd = m.at("dims");
  ModelDims dims;
  dims.view_dims = field<std::vector<std::size_t>>(jd, "view_dims");
  dims.prompt_dim = field<std::size_t>(jd, "prompt_dim");
  dims.layers = field<std::size_t>(jd, "layers");
  dims.heads = field<std::size_t>(jd, "heads");
  dims.factors = field<std::size_t>(jd, "factors");
  dims.tt_ranks = field<std::vector<std::size_t>>(jd, "tt_ranks");
  dims.bank = parse_bank_kind(field<std::string>(jd, "bank"));
  dims.validate();

  SessionPlan plan;
  const json& jp = m.at("plan");
  plan.total_classes = field<std::size_t>(jp, "total_classes");
  plan.base_classes = field<std::size_t>(jp, "base_classes");
  plan.increment = field<std::size_t>(jp, "increment");
  plan.class_sets = field<std::vector<std::vector<std::size_t>>>(jp, "class_sets");
  plan.validate();

  Checkpoint out{config_from_json(m.at("config")), field<std::uint64_t>(m, "seed"), plan,
                 PromptModel(dims)};
  Rng unused(0);
  for (std::size_t classes : field<std::vector<std::size_t>>(m, "task_classes")) {
    out.model.add_task(classes, unused);
  }

  std::set<std::string> seen;
  const json& tensors = m.at("tensors");
  if (!tensors.is_array()) fail(ErrorKind::Validation, kModule, "tensors must be an array");
  for (const json& e : tensors) {
    const auto name = field<std::string>(e, "name");
    ParamTensor* t = out.model.find_parameter(name);
    if (!t) fail(ErrorKind::Validation, kModule, "unknown tensor " + name);
    if (!seen.insert(name).second) fail(ErrorKind::Validation, kModule, "duplicate tensor " + name);
    const auto shape = field<std::vector<std::size_t>>(e, "shape");
    if (shape.size() != 2 || shape[0] != t->value.rows() || shape[1] != t->value.cols()) {
      fail(ErrorKind::Validation, kModule,
           "tensor " + name + " shape disagrees with model " + t->value.shape_string());
    }
    const auto offset = field<std::uint64_t>(e, "offset");
    const std::uint64_t size = 8 * t->value.size();
    if (offset > payload || size > payload - offset) {
      fail(ErrorKind::Validation, kModule, "tensor " + name + " runs past the payload");
    }
    const char* base = bytes.data() + payload_start + offset;
    auto values = t->value.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] = std::bit_cast<double>(get_u64(base + 8 * i));
    }
    t->trainable = field<bool>(e, "trainable");
    t->frozen = field<bool>(e, "frozen");
  }
  if (seen.size() != out.model.parameters().size()) {
    fail(ErrorKind::Validation, kModule, "checkpoint is missing tensors");
  }
  std::uint64_t expected = 0;
  for (const ParamTensor* t : out.model.parameters()) expected += 8 * t->value.size();
  if (expected != payload) {
    fail(ErrorKind::Validation, kModule,
         "payload holds " + std::to_string(payload) + " bytes, tensors need " + std::to_string(expected));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ExperimentConfig& config,
                     std::uint64_t seed, const SessionPlan& plan, const PromptModel& model) {
  const std::string bytes = checkpoint_bytes(config, seed, plan, model);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, kModule, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, kModule, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, kModule, "cannot open checkpoint " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), {}};
  return parse_checkpoint(bytes);
}

}  // namespace ttprompt
