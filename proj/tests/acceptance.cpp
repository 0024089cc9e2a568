// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one [PASS]/[FAIL] line per criterion and exits
// nonzero when any criterion fails. Pass criterion numbers to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "ttprompt/checkpoint.hpp"
#include "ttprompt/config.hpp"
#include "ttprompt/dcl.hpp"
#include "ttprompt/ept.hpp"
#include "ttprompt/experiment.hpp"
#include "ttprompt/incremental.hpp"
#include "ttprompt/metrics.hpp"
#include "ttprompt/ttprompt.h"

using namespace ttprompt;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (!pass) detail << "; ";
      detail << what;
      pass = false;
    }
  }
};

bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

std::string take(char* s) {
  std::string out = s ? s : "";
  ttp_free_string(s);
  return out;
}

// 1
void tt_oracle(Outcome& o) {
  double worst = 0.0;
  for (std::size_t n : {2, 3, 4}) {
    for (std::size_t k : {1, 2, 4}) {
      for (std::uint64_t seed = 0; seed < 50; ++seed) {
        EptBank bank(n, 8, k, EptBank::uniform_ranks(n, 2));
        Rng rng(seed * 1000 + n * 10 + k);
        for (ParamTensor* p : bank.parameters())
          for (double& v : p->value.values()) v = rng.normal();
        const auto full = oracle::tt_full_tensor(bank);
        for (std::size_t m = 0; m < full.size(); ++m) {
          const Matrix beta = bank.coefficients(MissingPattern::from_index(m, n));
          for (std::size_t s = 0; s < k; ++s) worst = std::max(worst, std::abs(beta(0, s) - full[m][s]));
        }
      }
    }
  }
  o.require(worst <= 1e-12, "max deviation " + std::to_string(worst));
  if (o.pass) o.detail << "max deviation " << worst;
}

// 2
void gradient_suite(Outcome& o) {
  char* out = nullptr;
  int passed = 0;
  const ttp_status s = ttp_gradcheck(R"({"gradcheck_step": 1e-5, "gradcheck_tolerance": 1e-4})", &out, &passed);
  o.require(s == TTP_OK, std::string("gradcheck call failed: ") + ttp_last_error());
  if (s != TTP_OK) return;
  const json r = json::parse(take(out));
  double worst = 0.0;
  std::set<std::string> blocks;
  for (const auto& b : r["blocks"]) {
    blocks.insert(b["block"].get<std::string>());
    worst = std::max(worst, b["rel_error"].get<double>());
    o.require(b["pass"].get<bool>(), b["block"].get<std::string>() + " failed");
  }
  for (const char* need : {"ept.basis", "ept.cores", "dcl.prompts", "encoders", "task1.prompt", "task1.head"}) {
    o.require(blocks.count(need) == 1, std::string("block ") + need + " not checked");
  }
  o.require(passed == 1, "overall verdict is fail");
  if (o.pass) o.detail << blocks.size() << " blocks, worst rel error " << worst;
}

// 3
void parameter_accounting(Outcome& o) {
  char* out = nullptr;
  const ttp_status s =
      ttp_param_table(R"({"prompt_dim": 128, "factors": 4, "tt_rank": 2, "params_n_min": 1, "params_n_max": 12})",
                      &out);
  o.require(s == TTP_OK, std::string("param table call failed: ") + ttp_last_error());
  if (s != TTP_OK) return;
  const json t = json::parse(take(out));
  const std::uint64_t d = 128, k = 4, R = 2;
  std::uint64_t prev_exact = 0, prev_map = 0;
  for (const auto& row : t["rows"]) {
    const std::uint64_t n = row["n"];
    const std::uint64_t exact = row["ept_exact"], map = row["map"];
    o.require(map == (std::uint64_t{1} << n) * d, "map formula at n=" + std::to_string(n));
    o.require(row["msp"] == n * d, "msp formula at n=" + std::to_string(n));
    o.require(row["epe_p"] == n * n * n + d * R, "epe-p formula at n=" + std::to_string(n));
    o.require(row["ept_bound"] == n * R * R * k + d * k, "ept bound formula at n=" + std::to_string(n));
    // Exact count: two 1 x R slices, then two R x R slices per further view, plus the R x k map.
    const std::uint64_t cores = 2 * R + (n - 1) * 2 * R * R + R * k;
    o.require(exact == d * k + cores, "ept exact count at n=" + std::to_string(n));
    if (n >= 2) {
      o.require(map == 2 * prev_map, "map does not double at n=" + std::to_string(n));
      if (n >= 3) o.require(exact - prev_exact == 2 * R * R, "ept growth not 2R^2 at n=" + std::to_string(n));
    }
    if (n == 6) {
      o.require(map == 8192, "MAP(6) != 8192");
      o.require(row["ept_bound"] == 608, "EPT bound(6) != 608");
      o.require(exact == 564, "EPT exact(6) != 564");
    }
    prev_exact = exact;
    prev_map = map;
  }
  o.require(t["growth"]["ept_exact_affine"] == true, "growth summary not affine");
  o.require(t["growth"]["map_doubles"] == true, "growth summary does not double");
  if (o.pass) o.detail << "MAP 8192, EPT bound 608, EPT exact 564, +8 per view";
}

// 4
void dcl_pairs(Outcome& o) {
  std::vector<MissingPattern> pats;
  std::vector<std::uint64_t> bits;
  for (std::uint64_t m = 1; m < 8; ++m) {
    pats.push_back(MissingPattern::from_index(m, 3));
    bits.push_back(m);
  }
  const auto [brute_pos, brute_neg] = oracle::count_pairs(bits);
  const PairSets base = build_pairs(pats, std::vector<double>{0.0, 0.0, 0.0});
  o.require(base.positives.size() == brute_pos && base.negatives.size() == brute_neg,
            "implementation disagrees with brute force");
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> w(3);
    for (double& x : w) x = rng.normal(0.0, 4.0);
    const PairSets p = build_pairs(pats, w);
    o.require(p.positives == base.positives && p.negatives == base.negatives,
              "pair sets change with view weights");
  }
  o.require(base.negatives.size() == 3 && base.positives.size() == 18,
            "|N|=" + std::to_string(base.negatives.size()) + " |P|=" + std::to_string(base.positives.size()) +
                " (brute force " + std::to_string(brute_neg) + "/" + std::to_string(brute_pos) +
                "), expected |N|=3 |P|=18");
  if (o.pass) o.detail << "|N|=3 |P|=18, weight invariant";
}

ExperimentConfig toy_config() {
  ExperimentConfig c;
  c.synthetic.samples = 240;
  c.synthetic.views = 3;
  c.synthetic.dims = {8};
  c.synthetic.classes = 9;
  c.synthetic.seed = 5;
  c.prompt_dim = 16;
  c.layers = 1;
  c.heads = 2;
  c.factors = 2;
  c.sessions = 3;
  c.base_classes = 3;
  c.epochs = 5;
  c.batch_size = 16;
  c.seeds = {7};
  return c;
}

// 5
void forgetting_freeze(Outcome& o) {
  const ExperimentConfig c = toy_config();
  std::vector<std::vector<Matrix>> before;
  std::size_t compared = 0;
  auto probe_logits = [](const PromptModel& model, const PreparedData& data, std::size_t tasks) {
    std::vector<Matrix> out;
    for (std::size_t task = 0; task < tasks; ++task) {
      for (std::size_t i = 0; i < std::min<std::size_t>(16, data.test.size()); ++i) {
        out.push_back(model.forward_task(data.dataset.view(data.test[i]), task).logits);
      }
    }
    return out;
  };
  RunHooks hooks;
  hooks.before_session = [&](std::size_t t, const PromptModel& model, const PreparedData& data) {
    before.push_back(probe_logits(model, data, t));
  };
  hooks.after_session = [&](std::size_t t, const PromptModel& model, const PreparedData& data) {
    const std::vector<Matrix> now = probe_logits(model, data, t);
    const std::vector<Matrix>& then = before.back();
    o.require(now.size() == then.size(), "probe size changed");
    for (std::size_t i = 0; i < now.size() && i < then.size(); ++i) {
      o.require(bit_equal(now[i], then[i]), "earlier head logits moved in session " + std::to_string(t + 1));
      ++compared;
    }
  };
  const SeedRun run = run_seed(c, c.seeds[0], &hooks);
  double sum = 0.0;
  for (const SessionResult& s : run.sessions) sum += s.metrics.map;
  const double mean = sum / static_cast<double>(run.sessions.size());
  o.require(run.sessions.size() == 3, "expected 3 sessions");
  o.require(std::abs(run.average_map - mean) <= 1e-12, "average mAP differs from the session mean");
  o.require(compared > 0, "nothing compared");
  if (o.pass) o.detail << compared << " probe logit vectors bit-identical";
}

// 6
void missing_simulator(Outcome& o) {
  std::size_t runs = 0;
  for (double p : {0.3, 0.5, 0.7}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SyntheticSpec s;
      s.samples = 1000;
      s.views = 6;
      s.dims = {4};
      s.classes = 6;
      s.seed = 100 + seed;
      Dataset ds = generate_synthetic(s);
      Rng rng(seed);
      simulate_missing(ds, p, rng);
      const std::size_t want = static_cast<std::size_t>(std::llround(p * 1000));
      for (std::size_t v = 0; v < 6; ++v) {
        std::size_t missing = 0;
        for (const auto& m : ds.indicators) missing += m.observed(v) ? 0 : 1;
        o.require(missing == want, "view " + std::to_string(v) + " has " + std::to_string(missing) +
                                       " missing at p=" + std::to_string(p));
      }
      for (const auto& m : ds.indicators) o.require(m.observed_count() >= 1, "instance lost every view");
      ++runs;

      if (seed == 0) {
        ModelDims dims;
        dims.view_dims = ds.view_dims;
        dims.prompt_dim = 16;
        dims.layers = 2;
        dims.heads = 2;
        dims.factors = 2;
        Rng init(seed + 1);
        PromptModel model(dims, init);
        model.add_task(6, init);
        Dataset noisy = ds;
        for (std::size_t i = 0; i < ds.samples(); ++i)
          for (std::size_t v = 0; v < 6; ++v)
            if (!ds.indicators[i].observed(v))
              for (double& x : noisy.features[v].row(i)) x = rng.normal(0.0, 50.0);
        for (std::size_t i = 0; i < 200; ++i) {
          o.require(bit_equal(infer(model, ds.view(i)).probs, infer(model, noisy.view(i)).probs),
                    "missing view features changed the output");
        }
      }
    }
  }
  if (o.pass) o.detail << runs << " simulations exact, shielding holds";
}

// 7
void metric_oracles(Outcome& o) {
  Rng rng(2026);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(63), c = 1 + rng.below(8);
    Matrix scores(n, c), labels(n, c);
    for (double& v : scores.values()) v = std::round(rng.uniform() * 20.0) / 20.0;
    for (double& v : labels.values()) v = rng.uniform() < 0.35 ? 1.0 : 0.0;
    const MetricValues m = compute_metrics(scores, labels);
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < c; ++k) {
      std::vector<double> s(n), l(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = scores(i, k);
        l[i] = labels(i, k);
      }
      if (const auto ap = oracle::ap(s, l)) {
        sum += *ap;
        ++used;
      }
    }
    if (used) worst = std::max(worst, std::abs(m.map - sum / used));
    o.require(m.evaluated_classes == used, "evaluated class count differs");
  }
  o.require(worst <= 1e-10, "mAP deviates from the oracle by " + std::to_string(worst));

  Matrix labels(20, 4);
  for (std::size_t i = 0; i < 20; ++i) labels(i, i % 4) = 1.0;
  labels(3, 0) = 1.0;
  const MetricValues perfect = compute_metrics(labels, labels);
  o.require(perfect.map == 1.0 && perfect.cf1 == 1.0 && perfect.of1 == 1.0, "perfect predictor below 1");

  double worst_gap = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r(seed + 50);
    Matrix s(1000, 3), l(1000, 3);
    for (double& v : s.values()) v = r.uniform();
    const double rates[3] = {0.1, 0.3, 0.5};
    for (std::size_t i = 0; i < 1000; ++i)
      for (std::size_t k = 0; k < 3; ++k) l(i, k) = r.uniform() < rates[k] ? 1.0 : 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<double> sc(1000), lb(1000);
      double prevalence = 0.0;
      for (std::size_t i = 0; i < 1000; ++i) {
        sc[i] = s(i, k);
        lb[i] = l(i, k);
        prevalence += lb[i] / 1000.0;
      }
      worst_gap = std::max(worst_gap, std::abs(*average_precision(sc, lb) - prevalence));
    }
  }
  o.require(worst_gap <= 0.05, "random AP strays " + std::to_string(worst_gap) + " from prevalence");
  if (o.pass) o.detail << "oracle deviation " << worst << ", random AP within " << worst_gap;
}

ExperimentConfig learning_config() {
  ExperimentConfig c;
  c.synthetic.samples = 1200;
  c.synthetic.views = 6;
  c.synthetic.dims = {32};
  c.synthetic.classes = 12;
  c.synthetic.cluster_separation = 2.0;
  c.synthetic.seed = 0;
  c.seeds = {1, 2, 3, 4, 5};
  c.sessions = 3;
  c.base_classes = 4;
  c.missing_rate = 0.3;
  c.prompt_dim = 64;
  c.layers = 2;
  c.heads = 4;
  c.epochs = 60;
  c.patience = 10;
  c.batch_size = 32;
  return c;
}

// 8
void learning_signal(Outcome& o) {
  ExperimentConfig c = learning_config();
  const ExperimentResult with = run_experiment(c);
  c.ablate_prompts = true;
  const ExperimentResult ablated = run_experiment(c);
  double last = 0.0, chance = 0.0, control = 0.0;
  for (const SeedRun& r : with.runs) {
    last += r.last_map / with.runs.size();
    chance += r.sessions.back().chance_map / with.runs.size();
  }
  for (const SeedRun& r : ablated.runs) control += r.last_map / ablated.runs.size();
  char buf[160];
  std::snprintf(buf, sizeof buf, "last mAP %.4f, chance %.4f, ablated %.4f (gap %.4f)", last, chance, control,
                last - control);
  o.require(last >= 0.60, std::string("last mAP below 0.60: ") + buf);
  o.require(last - chance >= 0.25, std::string("margin over chance below 0.25: ") + buf);
  o.require(last - control >= 0.05, std::string("margin over ablated control below 0.05: ") + buf);
  if (o.pass) o.detail << buf;
}

// 9
void determinism(Outcome& o) {
  const ExperimentConfig c = toy_config();
  const ExperimentResult a = run_experiment(c);
  const ExperimentResult b = run_experiment(c);
  o.require(report_json(c, a).dump() == report_json(c, b).dump(), "reports differ");

  const SeedRun& run = a.runs.front();
  const std::string bytes = checkpoint_bytes(c, run.seed, run.plan, *run.model);
  const Checkpoint ck = parse_checkpoint(bytes);
  const PreparedData data = prepare_data(c, run.seed);
  const auto want = evaluate_all(*run.model, data, c);
  const auto got = evaluate_all(ck.model, data, c);
  o.require(want.size() == got.size(), "session count differs after reload");
  for (std::size_t t = 0; t < want.size() && t < got.size(); ++t) {
    const bool same = std::memcmp(&want[t].map, &got[t].map, sizeof(double)) == 0 &&
                      std::memcmp(&want[t].cf1, &got[t].cf1, sizeof(double)) == 0 &&
                      std::memcmp(&want[t].of1, &got[t].of1, sizeof(double)) == 0;
    o.require(same, "metrics differ after reload in session " + std::to_string(t + 1));
  }
  o.require(checkpoint_bytes(ck.config, ck.seed, ck.plan, ck.model) == bytes, "re-serialized bytes differ");
  if (o.pass) o.detail << "reports identical, " << want.size() << " sessions bitwise equal after reload";
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "tt-oracle-equivalence", 5, tt_oracle},
      {2, "gradient-suite", 30, gradient_suite},
      {3, "parameter-accounting", 1, parameter_accounting},
      {4, "dcl-pair-oracle", 1, dcl_pairs},
      {5, "forgetting-freeze", 120, forgetting_freeze},
      {6, "missing-simulator", 10, missing_simulator},
      {7, "metric-oracles", 20, metric_oracles},
      {8, "end-to-end-learning-signal", 600, learning_signal},
      {9, "determinism-and-persistence", 120, determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_seconds) {
      o.require(false, "took " + std::to_string(secs) + " s, budget " + std::to_string(c.budget_seconds) + " s");
    }
    std::printf("[%s] %d %s (%.2f s) %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.str().c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
