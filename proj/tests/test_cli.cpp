/* SPDX-License-Identifier: Apache-2.0 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "json.hpp"
#include "qbranch/engine.hpp"
#include "qbranch/instance.hpp"
#include "qbranch/transition.hpp"
#include "test_support.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

// End-to-end tests driving the installed command-line binary. The binary path
// is injected at compile time so the tests always exercise the freshly built
// executable.

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qbranch;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path test_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / ("qbranch_cli_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = test_root() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run_cli(const std::string& args) {
  const fs::path out_file = test_root() / "stdout.txt";
  const fs::path err_file = test_root() / "stderr.txt";
  const std::string cmd = std::string(QBRANCH_CLI_PATH) + " " + args + " > " +
                          out_file.string() + " 2> " + err_file.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

json json_out(const RunResult& r) {
  REQUIRE(r.code == 0);
  return json::parse(r.out);
}

// Two binaries, both pushed to their upper bound by the objective: the root
// relaxation is already integral, so any policy proves optimality in one node.
MilpInstance integral_root_instance() {
  MilpInstance inst;
  inst.n_vars = 2;
  inst.n_cons = 1;
  inst.obj = {-1.0, -2.0};
  inst.lower = {0.0, 0.0};
  inst.upper = {1.0, 1.0};
  inst.integer_mask = {true, true};
  inst.rows = {{{0, 0, 1.0}, {0, 1, 1.0}}};
  inst.rhs = {2.0};
  return inst;
}

std::vector<std::pair<double, double>> parse_curve(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  REQUIRE(std::getline(in, line));
  REQUIRE(line == "work_time,dual_bound");
  std::vector<std::pair<double, double>> rows;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    REQUIRE(comma != std::string::npos);
    rows.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
  }
  return rows;
}

}  // namespace

TEST_CASE("version flag prints the pinned version") {
  RunResult r = run_cli("--version");
  CHECK(r.code == 0);
  CHECK(r.out == "0.1.0\n");
}

TEST_CASE("generate writes valid, deterministic instance sets") {
  const fs::path a = fresh_dir("gen_a");
  const fs::path b = fresh_dir("gen_b");
  const std::string flags = "generate --family cover --rows 6 --cols 12 --density 0.4 "
                            "--count 5 --seed 9 --out ";
  REQUIRE(run_cli(flags + a.string()).code == 0);
  REQUIRE(run_cli(flags + b.string()).code == 0);

  for (int k = 0; k < 5; ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "inst_%04d.txt", k);
    const std::string text = slurp(a / name);
    CHECK(text == slurp(b / name));  // same seed, same bytes
    const MilpInstance inst = read_instance(text);
    CHECK(!validate(inst).has_value());
    CHECK(inst.n_vars == 12);
    CHECK(inst.n_cons == 6);
  }

  const json manifest = json::parse(slurp(a / "manifest.json"));
  CHECK(manifest["version"] == "0.1.0");
  CHECK(manifest["command"] == "generate");
  CHECK(manifest["config"]["count"] == 5);
  CHECK(manifest["config"]["family"] == "cover");
  CHECK(manifest["artifacts"].size() == 5);

  const fs::path c = fresh_dir("gen_c");
  REQUIRE(run_cli("generate --family knapsack --rows 2 --cols 10 --count 3 --seed 4 --out " +
                  c.string())
              .code == 0);
  for (int k = 0; k < 3; ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "inst_%04d.txt", k);
    const MilpInstance inst = read_instance(slurp(c / name));
    CHECK(!validate(inst).has_value());
    CHECK(inst.n_vars == 10);
  }
}

TEST_CASE("solve reports a one-node proof on an integral relaxation") {
  const fs::path dir = fresh_dir("solve_root");
  const fs::path inst_path = dir / "easy.txt";
  std::ofstream(inst_path) << write_instance(integral_root_instance());

  const RunResult r = run_cli("solve --instance " + inst_path.string() +
                              " --policy sb --out " + (dir / "out").string());
  const json rep = json_out(r);
  CHECK(rep["status"] == "optimal");
  CHECK(rep["node_count"] == 1);
  CHECK(rep["primal_value"].get<double>() == -3.0);
  CHECK(rep["z_ref"].get<double>() == -3.0);
  CHECK(rep["final_dual_bound"].get<double>() == -3.0);
  CHECK(rep["dual_integral"].get<double>() == 0.0);
  REQUIRE(rep["incumbent"].size() == 2);
  CHECK(rep["incumbent"][0].get<double>() == 1.0);
  CHECK(rep["incumbent"][1].get<double>() == 1.0);

  const auto curve = parse_curve(slurp(dir / "out" / "bound_curve.csv"));
  REQUIRE(!curve.empty());
  CHECK(curve.back().second == -3.0);
  const json manifest = json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(manifest["command"] == "solve");
  CHECK(manifest["config"]["policy"] == "sb");
}

TEST_CASE("solve policies agree on the optimum and the curve re-integrates") {
  const fs::path dir = fresh_dir("solve_agree");
  const MilpInstance inst = generate_knapsack_like(14, 2, 71);
  const fs::path inst_path = dir / "kn.txt";
  std::ofstream(inst_path) << write_instance(inst);

  const auto oracle = qbranch::testing::oracle_enumerate(inst);
  REQUIRE(oracle.has_value());

  for (const std::string policy : {"sb", "pc", "mostinf", "random"}) {
    const RunResult r = run_cli("solve --instance " + inst_path.string() + " --policy " + policy +
                                " --limits-work 100000 --seed 3 --out " +
                                (dir / ("out_" + policy)).string());
    const json rep = json_out(r);
    CHECK(rep["status"] == "optimal");
    CHECK(rep["primal_value"].get<double>() == doctest::Approx(oracle->first).epsilon(1e-9));

    // The emitted curve must reproduce the reported integral exactly: the CSV
    // doubles round-trip, and the horizon is the finite work limit.
    const auto curve = parse_curve(slurp(dir / ("out_" + policy) / "bound_curve.csv"));
    std::vector<TracePoint> trace;
    for (const auto& [w, bound] : curve) trace.push_back({w, bound});
    const double again =
        dual_integral_score(trace, 100000.0, rep["z_ref"].get<double>());
    CHECK(again == rep["dual_integral"].get<double>());
  }
}

TEST_CASE("evaluate awards wins by strict best score") {
  const fs::path inst_dir = fresh_dir("eval_insts");
  REQUIRE(run_cli("generate --family knapsack --rows 2 --cols 12 --count 4 --seed 11 --out " +
                  inst_dir.string())
              .code == 0);
  fs::remove(inst_dir / "manifest.json");  // leave only the .txt corpus

  // A single entrant has the strict best score everywhere.
  const json solo = json_out(run_cli("evaluate --instances " + inst_dir.string() +
                                     " --policies sb --limits-work 50000 --out " +
                                     fresh_dir("eval_solo").string()));
  CHECK(solo["instances"] == 4);
  REQUIRE(solo["table"].size() == 1);
  CHECK(solo["table"][0]["policy"] == "sb");
  CHECK(solo["table"][0]["wins"] == 4);

  // Identical deterministic entrants tie exactly; ties award nobody.
  const json twin = json_out(run_cli("evaluate --instances " + inst_dir.string() +
                                     " --policies sb,sb --limits-work 50000 --out " +
                                     fresh_dir("eval_twin").string()));
  REQUIRE(twin["table"].size() == 2);
  CHECK(twin["table"][0]["wins"] == 0);
  CHECK(twin["table"][1]["wins"] == 0);
  CHECK(twin["table"][0]["mean_score"].get<double>() ==
        twin["table"][1]["mean_score"].get<double>());

  // Mixed field: recompute wins and means from the full-precision CSV.
  const fs::path mix_out = fresh_dir("eval_mix");
  const json mix = json_out(run_cli("evaluate --instances " + inst_dir.string() +
                                    " --policies sb,random,mostinf --limits-work 50000 "
                                    "--seed 5 --out " +
                                    mix_out.string()));
  std::istringstream csv(slurp(mix_out / "scores.csv"));
  std::string line;
  REQUIRE(std::getline(csv, line));
  CHECK(line == "instance,sb,random,mostinf");
  std::vector<std::array<double, 3>> scores;
  while (std::getline(csv, line)) {
    std::array<double, 3> row{};
    std::size_t pos = line.find(',');
    for (int p = 0; p < 3; ++p) {
      const std::size_t next = line.find(',', pos + 1);
      row[p] = std::stod(line.substr(pos + 1, next - pos - 1));
      pos = next;
    }
    scores.push_back(row);
  }
  REQUIRE(scores.size() == 4);
  long long wins[3] = {0, 0, 0};
  long long total_wins = 0;
  for (const auto& row : scores) {
    int best = 0;
    bool tie = false;
    for (int p = 1; p < 3; ++p) {
      if (row[p] > row[best]) {
        best = p;
        tie = false;
      } else if (row[p] == row[best]) {
        tie = true;
      }
    }
    if (!tie) {
      ++wins[best];
      ++total_wins;
    }
  }
  CHECK(total_wins <= 4);
  for (int p = 0; p < 3; ++p) {
    CHECK(mix["table"][p]["wins"].get<long long>() == wins[p]);
    StableSum sum;
    for (const auto& row : scores) sum.add(row[p]);
    CHECK(mix["table"][p]["mean_score"].get<double>() == sum.value() / 4.0);
  }

  CHECK(run_cli("evaluate --instances " + inst_dir.string() + " --policies bogus --out " +
                fresh_dir("eval_bad").string())
            .code != 0);
  CHECK(run_cli("evaluate --instances " + inst_dir.string() +
                " --policies learned:/nonexistent.bin --out " +
                fresh_dir("eval_bad2").string())
            .code != 0);
}

TEST_CASE("collect-demo writes a loadable transition file") {
  const fs::path dir = fresh_dir("demo_out");
  const RunResult r =
      run_cli("collect-demo --family cover --rows 6 --cols 10 --density 0.5 --expert sb "
              "--n 15 --seed 2 --out " +
              dir.string());
  REQUIRE(r.code == 0);
  const auto demos = load_transitions((dir / "demos.bin").string());
  REQUIRE(demos.size() == 15);
  for (const Transition& t : demos) CHECK(t.origin == Transition::Origin::kDemo);
  const json manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["command"] == "collect-demo");
  CHECK(manifest["artifacts"] == json::array({"demos.bin"}));
}

TEST_CASE("train runs are byte-identical for one seed and diverge across seeds") {
  const fs::path dir = fresh_dir("train_cfg");
  const fs::path cfg = dir / "train.cfg";
  std::ofstream(cfg) << "family=cover\n"
                        "rows=6\n"
                        "cols=10\n"
                        "density=0.5\n"
                        "total_steps=8\n"
                        "eval_period=4\n"
                        "target_period=3\n"
                        "batch_size=4\n"
                        "hidden=4\n"
                        "capacity_self=64\n"
                        "warmup_steps=0\n"
                        "lr=0.05\n"
                        "episode_work_limit=400\n"
                        "demo_n=12\n"
                        "demo_expert=sb\n"
                        "demo_seed=2\n"
                        "eval_count=2\n"
                        "eval_seed=3\n"
                        "sampler_seed=4\n";

  const fs::path t1 = fresh_dir("train_1");
  const fs::path t2 = fresh_dir("train_2");
  const fs::path t3 = fresh_dir("train_3");
  const std::string base = "train --config " + cfg.string();
  REQUIRE(run_cli(base + " --seed 7 --out " + t1.string()).code == 0);
  REQUIRE(run_cli(base + " --seed 7 --out " + t2.string()).code == 0);
  REQUIRE(run_cli(base + " --seed 8 --out " + t3.string()).code == 0);

  CHECK(slurp(t1 / "eval_curve.csv") == slurp(t2 / "eval_curve.csv"));
  CHECK(slurp(t1 / "qnet_online.bin") == slurp(t2 / "qnet_online.bin"));
  CHECK(slurp(t1 / "qnet_superior.bin") == slurp(t2 / "qnet_superior.bin"));
  CHECK(slurp(t1 / "qnet_online.bin") != slurp(t3 / "qnet_online.bin"));

  std::istringstream curve(slurp(t1 / "eval_curve.csv"));
  std::string line;
  REQUIRE(std::getline(curve, line));
  CHECK(line == "step,mean_return");
  int rows = 0;
  while (std::getline(curve, line)) ++rows;
  CHECK(rows == 2);  // evals at steps 4 and 8

  const json report = json::parse(slurp(t1 / "report.json"));
  CHECK(report["final_mean_return"].is_number());
  CHECK(report["g_best"].is_number());
  const json manifest = json::parse(slurp(t1 / "manifest.json"));
  CHECK(manifest["command"] == "train");
  CHECK(manifest["config"]["seed"] == 7);  // --seed overrides the config file
  CHECK(manifest["artifacts"].size() == 4);
}
