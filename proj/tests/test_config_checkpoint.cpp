// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "ttprompt/checkpoint.hpp"
#include "ttprompt/config.hpp"
#include "ttprompt/error.hpp"
#include "ttprompt/experiment.hpp"

using namespace ttprompt;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.synthetic.samples = 80;
  c.synthetic.views = 3;
  c.synthetic.dims = {4};
  c.synthetic.classes = 6;
  c.synthetic.seed = 11;
  c.prompt_dim = 8;
  c.layers = 1;
  c.heads = 2;
  c.factors = 2;
  c.sessions = 2;
  c.base_classes = 4;
  c.epochs = 2;
  c.batch_size = 16;
  c.seeds = {3};
  return c;
}

void expect_config_error(const json& doc) {
  try {
    config_from_json(doc);
    FAIL("expected a config error for " << doc.dump());
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("empty document gives the defaults") {
    const ExperimentConfig c = config_from_json(json::object());
    CHECK(c.prompt_dim == 128);
    CHECK(c.layers == 3);
    CHECK(c.factors == 4);
    CHECK(c.tt_rank == 2);
    CHECK(c.lr == 0.02);
    CHECK(c.lambda == 0.001);
    CHECK(c.bank == BankKind::Ept);
    CHECK(c.seeds == std::vector<std::uint64_t>{1});
  }

  TEST_CASE("unknown keys and bad types are rejected") {
    expect_config_error(json{{"promt_dim", 8}});
    expect_config_error(json{{"synthetic", {{"sample", 10}}}});
    expect_config_error(json{{"layers", -1}});
    expect_config_error(json{{"layers", 1.5}});
    expect_config_error(json{{"ablate_prompts", 1}});
    expect_config_error(json{{"bank", "nope"}});
    expect_config_error(json{{"prompt_dim", 7}});
    expect_config_error(json{{"synthetic", {{"classes", 12}}}, {"base_classes", 5}, {"sessions", 3}});
  }

  TEST_CASE("json round trip and hash stability") {
    const ExperimentConfig c = tiny_config();
    const auto doc = config_to_json(c);
    const ExperimentConfig back = config_from_json(json::parse(doc.dump()));
    CHECK(config_to_json(back).dump() == doc.dump());
    CHECK(config_hash(back) == config_hash(c));
    CHECK(config_hash(c).size() == 16);
    ExperimentConfig other = c;
    other.lr = 0.021;
    CHECK(config_hash(other) != config_hash(c));
  }

  TEST_CASE("overrides parse json values with a string fallback") {
    json doc = json::object();
    apply_override(doc, "epochs=7");
    apply_override(doc, "synthetic.classes=9");
    apply_override(doc, "bank=dense");
    apply_override(doc, "seeds=[4,5]");
    CHECK(doc["epochs"] == 7);
    CHECK(doc["synthetic"]["classes"] == 9);
    CHECK(doc["bank"] == "dense");
    CHECK(doc["seeds"] == json::array({4, 5}));
    CHECK_THROWS_AS(apply_override(doc, "novalue"), Error);
  }

  TEST_CASE("missing config files are io errors") {
    try {
      load_config("/nonexistent/ttprompt.json");
      FAIL("expected an io error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Io);
    }
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("bytes round trip exactly and evaluation is unchanged") {
    const ExperimentConfig c = tiny_config();
    const SeedRun run = run_seed(c, 3);
    REQUIRE(run.model);
    const std::string bytes = checkpoint_bytes(c, 3, run.plan, *run.model);
    const Checkpoint ck = parse_checkpoint(bytes);
    CHECK(ck.seed == 3);
    CHECK(ck.plan.class_sets == run.plan.class_sets);
    CHECK(checkpoint_bytes(ck.config, ck.seed, ck.plan, ck.model) == bytes);

    const PreparedData data = prepare_data(c, 3);
    const auto a = evaluate_all(*run.model, data, c);
    const auto b = evaluate_all(ck.model, data, c);
    REQUIRE(a.size() == b.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
      CHECK(std::memcmp(&a[t].map, &b[t].map, sizeof(double)) == 0);
      CHECK(std::memcmp(&a[t].cf1, &b[t].cf1, sizeof(double)) == 0);
      CHECK(std::memcmp(&a[t].of1, &b[t].of1, sizeof(double)) == 0);
      CHECK(a[t].map == run.sessions[t].metrics.map);
    }

    const fs::path path = fs::temp_directory_path() / "ttprompt_test_ck.ttp";
    save_checkpoint(path, c, 3, run.plan, *run.model);
    const Checkpoint loaded = load_checkpoint(path);
    CHECK(checkpoint_bytes(loaded.config, loaded.seed, loaded.plan, loaded.model) == bytes);
  }

  TEST_CASE("corrupted checkpoints are rejected") {
    const ExperimentConfig c = tiny_config();
    Rng rng(1);
    ModelDims dims = c.model_dims({4, 4, 4});
    PromptModel model(dims, rng);
    model.add_task(4, rng);
    Rng prng(2);
    SessionPlan plan = partition_classes(6, 4, 2, prng);
    const std::string bytes = checkpoint_bytes(c, 1, plan, model);
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(parse_checkpoint(bad), Error);
    CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, bytes.size() - 8)), Error);
    CHECK_THROWS_AS(parse_checkpoint(bytes + "extra123"), Error);
    CHECK_THROWS_AS(parse_checkpoint(""), Error);
  }
}

TEST_SUITE("experiment") {
  TEST_CASE("reports are deterministic and consistent") {
    const ExperimentConfig c = tiny_config();
    const std::string a = report_json(c, run_experiment(c)).dump();
    const std::string b = report_json(c, run_experiment(c)).dump();
    CHECK(a == b);
    const json r = json::parse(a);
    const auto& sessions = r["runs"][0]["sessions"];
    REQUIRE(sessions.size() == 2);
    double sum = 0.0;
    for (const auto& s : sessions) {
      sum += s["metrics"]["mAP"].get<double>();
      for (const char* k : {"mAP", "CF1", "OF1"}) {
        CHECK(s["metrics"][k].get<double>() >= 0.0);
        CHECK(s["metrics"][k].get<double>() <= 1.0);
      }
    }
    CHECK(r["runs"][0]["average_mAP"].get<double>() == doctest::Approx(sum / 2.0).epsilon(1e-12));
    CHECK(r["config_hash"] == config_hash(c));
  }

  TEST_CASE("zero separation trains to about chance") {
    ExperimentConfig c = tiny_config();
    c.synthetic.samples = 400;
    c.synthetic.cluster_separation = 0.0;
    c.sessions = 1;
    c.base_classes = 6;
    c.epochs = 10;
    c.seeds = {1, 2, 3};
    double gap = 0.0;
    for (const SeedRun& r : run_experiment(c).runs) {
      gap += (r.last_map - r.sessions.back().chance_map) / 3.0;
    }
    CHECK(std::abs(gap) <= 0.08);
  }

  TEST_CASE("parameter table growth") {
    ExperimentConfig c;
    c.prompt_dim = 128;
    const json t = json::parse(param_table(c).dump());
    CHECK(t["growth"]["ept_exact_affine"] == true);
    CHECK(t["growth"]["map_doubles"] == true);
    CHECK(t["growth"]["ept_exact_increment"] == 8);
    bool found = false;
    for (const auto& row : t["rows"]) {
      if (row["n"] != 6) continue;
      found = true;
      CHECK(row["map"] == 8192);
      CHECK(row["ept_bound"] == 608);
      CHECK(row["ept_exact"] == 564);
      CHECK(row["msp"] == 768);
    }
    CHECK(found);
  }
}
