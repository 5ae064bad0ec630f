/* SPDX-License-Identifier: Apache-2.0 */
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qbranch/engine.hpp"
#include "qbranch/instance.hpp"
#include "qbranch/policies.hpp"
#include "qbranch/qnet.hpp"
#include "qbranch/trainer.hpp"

using json = nlohmann::json;
using namespace qbranch;

namespace {

constexpr const char* kVersion = "0.1.0";

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::filesystem::path prepare_out_dir(const std::string& out) {
  const std::filesystem::path dir(out);
  std::filesystem::create_directories(dir);
  return dir;
}

// One manifest per output directory: the command, its resolved inputs, and
// the artifacts it wrote, enough to rerun the command byte for byte.
void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    json resolved, std::vector<std::string> artifacts) {
  json m;
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = std::move(resolved);
  m["artifacts"] = std::move(artifacts);
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::kOptimal:
      return "optimal";
    case SolveStatus::kInfeasible:
      return "infeasible";
    default:
      return "limit";
  }
}

json report_to_json(const SolveReport& r) {
  json j;
  j["status"] = status_name(r.status);
  j["primal_value"] = r.incumbent ? json(r.primal_value) : json();
  j["final_dual_bound"] = r.final_dual_bound;
  j["node_count"] = r.node_count;
  j["total_work"] = r.total_work;
  j["z_ref"] = r.z_ref;
  j["dual_integral"] = r.dual_integral;
  if (r.incumbent)
    j["incumbent"] = *r.incumbent;
  else
    j["incumbent"] = json();
  return j;
}

std::string curve_csv(const std::vector<TracePoint>& trace) {
  std::string csv = "work_time,dual_bound\n";
  for (const TracePoint& p : trace)
    csv += format_double(p.work) + "," + format_double(p.bound) + "\n";
  return csv;
}

struct FamilySpec {
  std::string family = "cover";
  int rows = 4;
  int cols = 20;
  double density = 0.3;
};

MilpInstance make_instance(const FamilySpec& spec, std::uint64_t seed) {
  if (spec.family == "cover") return generate_set_cover(spec.rows, spec.cols, spec.density, seed);
  if (spec.family == "knapsack") return generate_knapsack_like(spec.cols, spec.rows, seed);
  throw std::runtime_error("unknown family: " + spec.family + " (expected cover or knapsack)");
}

InstanceSampler family_sampler(const FamilySpec& spec, std::uint64_t seed) {
  return [spec, seed](long long episode) {
    return make_instance(spec, derive_seed(seed, static_cast<std::uint64_t>(episode)));
  };
}

json family_json(const FamilySpec& spec) {
  return json{{"family", spec.family},
              {"rows", spec.rows},
              {"cols", spec.cols},
              {"density", spec.density}};
}

// Policy specs: sb | pc | mostinf | random | learned:<checkpoint path>.
std::unique_ptr<BranchingPolicy> make_policy(const std::string& spec, std::uint64_t seed) {
  if (spec == "sb") return std::make_unique<StrongBranchingPolicy>();
  if (spec == "pc") return std::make_unique<PseudocostPolicy>();
  if (spec == "mostinf") return std::make_unique<MostInfeasiblePolicy>();
  if (spec == "random") return std::make_unique<RandomPolicy>(seed);
  if (spec.rfind("learned:", 0) == 0) {
    const std::string path = spec.substr(8);
    if (path.empty()) throw std::runtime_error("learned policy needs a checkpoint path");
    return std::make_unique<GreedyQPolicy>(load_qnet(path));
  }
  throw std::runtime_error("unknown policy: " + spec +
                           " (expected sb, pc, mostinf, random, or learned:<path>)");
}

void add_family_flags(CLI::App* cmd, FamilySpec& spec) {
  cmd->add_option("--family", spec.family, "Instance family: cover or knapsack");
  cmd->add_option("--rows", spec.rows, "Constraint rows (cover) or capacity rows (knapsack)");
  cmd->add_option("--cols", spec.cols, "Binary columns (cover) or items (knapsack)");
  cmd->add_option("--density", spec.density, "Cover row density in (0, 1]");
}

// ---------------------------------------------------------------- generate

int cmd_generate(const FamilySpec& spec, int count, std::uint64_t seed, const std::string& out) {
  if (count < 1) throw std::runtime_error("--count must be positive");
  const std::filesystem::path dir = prepare_out_dir(out);
  std::vector<std::string> files;
  for (int k = 0; k < count; ++k) {
    const MilpInstance inst = make_instance(spec, derive_seed(seed, static_cast<std::uint64_t>(k)));
    char name[32];
    std::snprintf(name, sizeof(name), "inst_%04d.txt", k);
    write_file(dir / name, write_instance(inst));
    files.emplace_back(name);
  }
  json cfg = family_json(spec);
  cfg["count"] = count;
  cfg["seed"] = seed;
  write_manifest(dir, "generate", cfg, files);
  std::cout << "wrote " << count << " instances to " << dir.string() << "\n";
  return 0;
}

// ------------------------------------------------------------------- solve

int cmd_solve(const std::string& instance_path, const std::string& policy_spec, double max_work,
              long long max_nodes, std::uint64_t seed, const std::string& out) {
  const MilpInstance inst = read_instance(read_file(instance_path));
  const std::unique_ptr<BranchingPolicy> policy = make_policy(policy_spec, seed);
  BnbLimits limits;
  limits.max_work = max_work;
  limits.max_nodes = max_nodes;
  const SolveReport report = solve(inst, *policy, limits);

  std::cout << report_to_json(report).dump(2) << "\n";

  const std::filesystem::path dir = prepare_out_dir(out);
  write_file(dir / "bound_curve.csv", curve_csv(report.bound_trace));
  json cfg;
  cfg["instance"] = instance_path;
  cfg["policy"] = policy_spec;
  cfg["limits_work"] = max_work;
  cfg["limits_nodes"] = max_nodes;
  cfg["seed"] = seed;
  write_manifest(dir, "solve", cfg, {"bound_curve.csv"});
  return 0;
}

// ------------------------------------------------------------ collect-demo

int cmd_collect_demo(const FamilySpec& spec, const std::string& expert, long long n,
                     std::uint64_t seed, double max_work, const std::string& out) {
  ExpertKind kind;
  if (expert == "sb")
    kind = ExpertKind::kStrongBranching;
  else if (expert == "pc")
    kind = ExpertKind::kPseudocost;
  else
    throw std::runtime_error("unknown expert: " + expert + " (expected sb or pc)");

  const std::vector<Transition> demos =
      collect_demonstrations(family_sampler(spec, seed), kind, n, max_work);
  const std::filesystem::path dir = prepare_out_dir(out);
  save_transitions(demos, (dir / "demos.bin").string());

  json cfg = family_json(spec);
  cfg["expert"] = expert;
  cfg["n"] = n;
  cfg["seed"] = seed;
  cfg["limits_work"] = max_work;
  write_manifest(dir, "collect-demo", cfg, {"demos.bin"});
  std::cout << "wrote " << demos.size() << " transitions to " << (dir / "demos.bin").string()
            << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

// Flat key = value lines; '#' starts a comment; keys mirror the trainer
// configuration plus the experiment inputs (family, demos, eval set).
std::map<std::string, std::string> parse_config_file(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto strip = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      const auto b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    if (strip(line).empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key or value");
    if (!kv.emplace(key, value).second)
      throw std::runtime_error("config line " + std::to_string(line_no) + ": duplicate key " + key);
  }
  return kv;
}

class ConfigReader {
 public:
  explicit ConfigReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  std::optional<std::string> raw(const std::string& key) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return std::nullopt;
    used_.insert(it->first);
    return it->second;
  }
  std::string str(const std::string& key, const std::string& fallback) {
    return raw(key).value_or(fallback);
  }
  double num(const std::string& key, double fallback) {
    const auto v = raw(key);
    if (!v) return fallback;
    double out = 0.0;
    if (!try_parse_double(*v, out))
      throw std::runtime_error("config key " + key + ": not a number: " + *v);
    return out;
  }
  long long integer(const std::string& key, long long fallback) {
    const double v = num(key, static_cast<double>(fallback));
    const long long out = static_cast<long long>(v);
    if (static_cast<double>(out) != v)
      throw std::runtime_error("config key " + key + ": not an integer");
    return out;
  }
  void reject_unknown() const {
    for (const auto& [key, value] : kv_)
      if (!used_.count(key)) throw std::runtime_error("config: unknown key " + key);
  }

 private:
  std::map<std::string, std::string> kv_;
  std::set<std::string> used_;
};

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed_override,
              const std::string& out) {
  ConfigReader cfg(parse_config_file(read_file(config_path)));

  FamilySpec spec;
  spec.family = cfg.str("family", spec.family);
  spec.rows = static_cast<int>(cfg.integer("rows", spec.rows));
  spec.cols = static_cast<int>(cfg.integer("cols", spec.cols));
  spec.density = cfg.num("density", spec.density);

  TrainerConfig tc;
  tc.gamma = cfg.num("gamma", tc.gamma);
  tc.epsilon = cfg.num("epsilon", tc.epsilon);
  tc.lr = cfg.num("lr", tc.lr);
  tc.batch_size = static_cast<int>(cfg.integer("batch_size", tc.batch_size));
  tc.target_period = cfg.integer("target_period", tc.target_period);
  tc.eval_period = cfg.integer("eval_period", tc.eval_period);
  tc.total_steps = cfg.integer("total_steps", tc.total_steps);
  tc.capacity_self = static_cast<std::size_t>(
      cfg.integer("capacity_self", static_cast<long long>(tc.capacity_self)));
  tc.lambda_s = cfg.num("lambda_s", tc.lambda_s);
  tc.seed = static_cast<std::uint64_t>(cfg.integer("seed", 0));
  tc.hidden = static_cast<int>(cfg.integer("hidden", tc.hidden));
  tc.warmup_steps = cfg.integer("warmup_steps", tc.warmup_steps);
  tc.episode_work_limit = cfg.num("episode_work_limit", tc.episode_work_limit);
  if (const auto g0 = cfg.raw("g0_fixed")) {
    double v = 0.0;
    if (!try_parse_double(*g0, v)) throw std::runtime_error("config key g0_fixed: not a number");
    tc.g0_fixed = v;
  }
  tc.g0_decay = cfg.num("g0_decay", tc.g0_decay);
  const std::string ablation = cfg.str("ablation", "dqfdws");
  if (ablation == "dqn")
    tc.ablation = Ablation::kDqn;
  else if (ablation == "dqfd")
    tc.ablation = Ablation::kDqfd;
  else if (ablation == "dqfdws")
    tc.ablation = Ablation::kDqfdws;
  else
    throw std::runtime_error("config key ablation: expected dqn, dqfd, or dqfdws");
  if (seed_override) tc.seed = *seed_override;

  const std::string demo_path = cfg.str("demo_path", "");
  const long long demo_n = cfg.integer("demo_n", 500);
  const std::string demo_expert = cfg.str("demo_expert", "sb");
  const long long eval_count = cfg.integer("eval_count", 10);
  const std::uint64_t sampler_seed = static_cast<std::uint64_t>(cfg.integer("sampler_seed", 1));
  const std::uint64_t eval_seed = static_cast<std::uint64_t>(cfg.integer("eval_seed", 2));
  const std::uint64_t demo_seed = static_cast<std::uint64_t>(cfg.integer("demo_seed", 3));
  cfg.reject_unknown();
  if (eval_count < 1) throw std::runtime_error("config key eval_count: must be positive");

  std::vector<Transition> demos;
  if (!demo_path.empty()) {
    demos = load_transitions(demo_path);
  } else if (demo_n > 0) {
    const ExpertKind kind =
        demo_expert == "pc" ? ExpertKind::kPseudocost : ExpertKind::kStrongBranching;
    if (demo_expert != "sb" && demo_expert != "pc")
      throw std::runtime_error("config key demo_expert: expected sb or pc");
    demos = collect_demonstrations(family_sampler(spec, demo_seed), kind, demo_n,
                                   tc.episode_work_limit);
  }

  // Held-out instances that actually reach a branching decision; on the rest
  // every policy scores zero, which would only dilute the evaluation.
  std::vector<MilpInstance> evals;
  int barren = 0;
  for (std::uint64_t k = 0; static_cast<long long>(evals.size()) < eval_count; ++k) {
    MilpInstance inst = make_instance(spec, derive_seed(eval_seed, k));
    BnbEnv env(inst, BnbLimits{tc.episode_work_limit, -1});
    if (env.reset().has_value()) {
      evals.push_back(std::move(inst));
      barren = 0;
    } else if (++barren >= 10000) {
      throw std::runtime_error("eval set: family produced 10000 decision-free instances in a row");
    }
  }

  const TrainReport report = train(tc, demos, family_sampler(spec, sampler_seed), evals);

  const std::filesystem::path dir = prepare_out_dir(out);
  std::string csv = "step,mean_return\n";
  for (const auto& [step, g] : report.eval_curve)
    csv += std::to_string(step) + "," + format_double(g) + "\n";
  write_file(dir / "eval_curve.csv", csv);
  save_qnet(report.online, (dir / "qnet_online.bin").string());
  save_qnet(report.superior, (dir / "qnet_superior.bin").string());

  json summary;
  summary["g_best"] = report.g_best;
  summary["admitted_flushes"] = report.admitted_flushes;
  summary["empty_buffer_steps"] = report.empty_buffer_steps;
  summary["final_mean_return"] =
      report.eval_curve.empty() ? json() : json(report.eval_curve.back().second);
  write_file(dir / "report.json", summary.dump(2) + "\n");

  json resolved = family_json(spec);
  resolved["gamma"] = tc.gamma;
  resolved["epsilon"] = tc.epsilon;
  resolved["lr"] = tc.lr;
  resolved["batch_size"] = tc.batch_size;
  resolved["target_period"] = tc.target_period;
  resolved["eval_period"] = tc.eval_period;
  resolved["total_steps"] = tc.total_steps;
  resolved["capacity_self"] = tc.capacity_self;
  resolved["lambda_s"] = tc.lambda_s;
  resolved["seed"] = tc.seed;
  resolved["ablation"] = ablation;
  resolved["hidden"] = tc.hidden;
  resolved["warmup_steps"] = tc.warmup_steps;
  resolved["episode_work_limit"] = tc.episode_work_limit;
  resolved["g0_fixed"] = tc.g0_fixed ? json(*tc.g0_fixed) : json();
  resolved["g0_decay"] = tc.g0_decay;
  resolved["demo_path"] = demo_path;
  resolved["demo_n"] = demo_n;
  resolved["demo_expert"] = demo_expert;
  resolved["demo_seed"] = demo_seed;
  resolved["sampler_seed"] = sampler_seed;
  resolved["eval_seed"] = eval_seed;
  resolved["eval_count"] = eval_count;
  write_manifest(dir, "train", resolved,
                 {"eval_curve.csv", "qnet_online.bin", "qnet_superior.bin", "report.json"});

  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const std::string& instance_dir, const std::vector<std::string>& policy_specs,
                 double max_work, std::uint64_t seed, const std::string& out) {
  if (policy_specs.empty()) throw std::runtime_error("--policies must name at least one policy");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(instance_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .txt instances in " + instance_dir);

  BnbLimits limits;
  limits.max_work = max_work;

  // scores[p][i]: higher dual-integral return is better.
  std::vector<std::vector<double>> scores(policy_specs.size());
  for (std::size_t p = 0; p < policy_specs.size(); ++p) {
    for (std::size_t i = 0; i < files.size(); ++i) {
      // Fresh policy per instance so stateful rules start clean, seeded per
      // (policy, instance) pair for determinism.
      const std::unique_ptr<BranchingPolicy> policy =
          make_policy(policy_specs[p], derive_seed(seed, p * 1000003ull + i));
      const MilpInstance inst = read_instance(read_file(files[i]));
      scores[p].push_back(solve(inst, *policy, limits).dual_integral);
    }
  }

  // A point per instance to the strict best; exact ties award nobody.
  std::vector<long long> wins(policy_specs.size(), 0);
  for (std::size_t i = 0; i < files.size(); ++i) {
    std::size_t best = 0;
    bool tie = false;
    for (std::size_t p = 1; p < policy_specs.size(); ++p) {
      if (scores[p][i] > scores[best][i]) {
        best = p;
        tie = false;
      } else if (scores[p][i] == scores[best][i]) {
        tie = true;
      }
    }
    if (!tie) ++wins[best];
  }

  json table = json::array();
  for (std::size_t p = 0; p < policy_specs.size(); ++p) {
    StableSum sum;
    for (double s : scores[p]) sum.add(s);
    table.push_back({{"policy", policy_specs[p]},
                     {"mean_score", sum.value() / static_cast<double>(files.size())},
                     {"wins", wins[p]}});
  }
  json result;
  result["instances"] = files.size();
  result["table"] = table;
  std::cout << result.dump(2) << "\n";

  const std::filesystem::path dir = prepare_out_dir(out);
  std::string csv = "instance";
  for (const auto& p : policy_specs) csv += "," + p;
  csv += "\n";
  for (std::size_t i = 0; i < files.size(); ++i) {
    csv += files[i].filename().string();
    for (std::size_t p = 0; p < policy_specs.size(); ++p)
      csv += "," + format_double(scores[p][i]);
    csv += "\n";
  }
  write_file(dir / "scores.csv", csv);
  json cfg;
  cfg["instance_dir"] = instance_dir;
  cfg["policies"] = policy_specs;
  cfg["limits_work"] = max_work;
  cfg["seed"] = seed;
  write_manifest(dir, "evaluate", cfg, {"scores.csv"});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branch-and-bound MILP solver with learned branching"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // generate
  FamilySpec gen_spec;
  int gen_count = 10;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  CLI::App* gen = app.add_subcommand("generate", "Write a directory of instance files");
  add_family_flags(gen, gen_spec);
  gen->add_option("--count", gen_count, "Number of instances");
  gen->add_option("--seed", gen_seed, "Generation seed");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // solve
  std::string solve_instance, solve_policy = "sb", solve_out;
  double solve_work = std::numeric_limits<double>::infinity();
  long long solve_nodes = -1;
  std::uint64_t solve_seed = 0;
  CLI::App* slv = app.add_subcommand("solve", "Solve one instance and emit its bound curve");
  slv->add_option("--instance", solve_instance, "Instance file")->required();
  slv->add_option("--policy", solve_policy, "sb | pc | mostinf | random | learned:<path>");
  slv->add_option("--limits-work", solve_work, "Work budget (simplex iterations)");
  slv->add_option("--limits-nodes", solve_nodes, "Node budget (negative = unlimited)");
  slv->add_option("--seed", solve_seed, "Seed for the random policy");
  slv->add_option("--out", solve_out, "Output directory")->required();

  // collect-demo
  FamilySpec demo_spec;
  std::string demo_expert = "sb", demo_out;
  long long demo_n = 1000;
  std::uint64_t demo_seed = 0;
  double demo_work = 5000.0;
  CLI::App* dem = app.add_subcommand("collect-demo", "Record expert branching transitions");
  add_family_flags(dem, demo_spec);
  dem->add_option("--expert", demo_expert, "sb | pc");
  dem->add_option("--n", demo_n, "Transitions to record");
  dem->add_option("--seed", demo_seed, "Sampler seed");
  dem->add_option("--limits-work", demo_work, "Per-episode work horizon");
  dem->add_option("--out", demo_out, "Output directory")->required();

  // train
  std::string train_config, train_out;
  std::optional<std::uint64_t> train_seed;
  CLI::App* trn = app.add_subcommand("train", "Run the training loop from a config file");
  trn->add_option("--config", train_config, "Flat key=value config file")->required();
  trn->add_option("--seed", train_seed, "Override the config seed");
  trn->add_option("--out", train_out, "Output directory")->required();

  // evaluate
  std::string eval_dir, eval_out;
  std::vector<std::string> eval_policies;
  double eval_work = 5000.0;
  std::uint64_t eval_seed = 0;
  CLI::App* evl = app.add_subcommand("evaluate", "Score policies across an instance directory");
  evl->add_option("--instances", eval_dir, "Directory of .txt instances")->required();
  evl->add_option("--policies", eval_policies, "Comma-separated policy specs")
      ->required()
      ->delimiter(',');
  evl->add_option("--limits-work", eval_work, "Per-instance work horizon");
  evl->add_option("--seed", eval_seed, "Seed for stochastic policies");
  evl->add_option("--out", eval_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(gen_spec, gen_count, gen_seed, gen_out);
    if (slv->parsed())
      return cmd_solve(solve_instance, solve_policy, solve_work, solve_nodes, solve_seed,
                       solve_out);
    if (dem->parsed())
      return cmd_collect_demo(demo_spec, demo_expert, demo_n, demo_seed, demo_work, demo_out);
    if (trn->parsed()) return cmd_train(train_config, train_seed, train_out);
    if (evl->parsed()) return cmd_evaluate(eval_dir, eval_policies, eval_work, eval_seed, eval_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
