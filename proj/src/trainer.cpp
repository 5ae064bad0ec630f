/* SPDX-License-Identifier: Apache-2.0 */
#include "qbranch/trainer.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <utility>

#include "qbranch/featurize.hpp"
#include "qbranch/policies.hpp"

namespace qbranch {

namespace {

// Decision-free episodes (integral or infeasible roots) consume no steps;
// cap how many in a row we tolerate before calling the sampler broken.
constexpr int kMaxBarrenEpisodes = 10000;

void validate_config(const TrainerConfig& cfg) {
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0))
    throw std::invalid_argument("train: gamma must lie in [0, 1]");
  if (!(cfg.epsilon >= 0.0 && cfg.epsilon <= 1.0))
    throw std::invalid_argument("train: epsilon must lie in [0, 1]");
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr))
    throw std::invalid_argument("train: learning rate must be positive and finite");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be positive");
  if (cfg.target_period < 1 || cfg.eval_period < 1)
    throw std::invalid_argument("train: update periods must be positive");
  if (cfg.total_steps < 0) throw std::invalid_argument("train: total_steps must be nonnegative");
  if (!(cfg.lambda_s >= 0.0) || !std::isfinite(cfg.lambda_s))
    throw std::invalid_argument("train: lambda_s must be nonnegative and finite");
  if (cfg.hidden < 1) throw std::invalid_argument("train: hidden width must be positive");
  if (!(cfg.episode_work_limit > 0.0) || !std::isfinite(cfg.episode_work_limit))
    throw std::invalid_argument("train: episode_work_limit must be positive and finite");
  if (!(cfg.g0_decay >= 0.0 && cfg.g0_decay <= 1.0))
    throw std::invalid_argument("train: g0_decay must lie in [0, 1]");
}

}  // namespace

InstanceSampler cover_sampler(int n_rows, int n_cols, double density, std::uint64_t seed) {
  return [=](long long episode) {
    return generate_set_cover(n_rows, n_cols, density,
                              derive_seed(seed, static_cast<std::uint64_t>(episode)));
  };
}

int epsilon_greedy(const std::vector<double>& q, const std::vector<int>& candidates,
                   double epsilon, Rng& rng) {
  if (candidates.empty()) throw std::invalid_argument("epsilon_greedy: no candidates");
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("epsilon_greedy: epsilon must lie in [0, 1]");
  // One bernoulli draw always; the index draw only on exploration.
  if (rng.bernoulli(epsilon)) return candidates[rng.index(candidates.size())];
  return masked_argmax(q, candidates);
}

std::vector<Transition> collect_demonstrations(const InstanceSampler& sampler, ExpertKind expert,
                                               long long n_transitions, double work_limit,
                                               const BnbOptions& options) {
  if (n_transitions < 0)
    throw std::invalid_argument("collect_demonstrations: n_transitions must be nonnegative");
  if (!(work_limit > 0.0) || !std::isfinite(work_limit))
    throw std::invalid_argument("collect_demonstrations: work_limit must be positive and finite");
  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(n_transitions));
  long long episode = 0;
  int barren = 0;
  while (static_cast<long long>(out.size()) < n_transitions) {
    const MilpInstance inst = sampler(episode);
    ++episode;
    BnbEnv env(inst, BnbLimits{work_limit, -1}, options);
    std::optional<BranchObs> obs = env.reset();
    if (!obs) {
      if (++barren >= kMaxBarrenEpisodes)
        throw std::runtime_error(
            "collect_demonstrations: sampler yielded only decision-free episodes");
      continue;
    }
    barren = 0;
    PseudocostPolicy pc;  // fresh gain history per instance
    StrongBranchingPolicy sb;
    while (obs && static_cast<long long>(out.size()) < n_transitions) {
      const int action = expert == ExpertKind::kStrongBranching ? sb.select(env.query())
                                                                : pc.select(env.query());
      // The node reference dies at step(); the history update needs it after.
      const BnbNode parent = env.query().node();
      Transition tr;
      tr.state = std::move(obs->state);
      tr.action = action;
      tr.origin = Transition::Origin::kDemo;
      const BnbEnv::StepResult res = env.step(action);
      tr.reward = res.reward;
      tr.done = res.done;
      if (!res.done) {
        tr.next_state = res.obs->state;
        tr.next_candidates = res.obs->candidates;
      }
      out.push_back(std::move(tr));
      if (expert == ExpertKind::kPseudocost) {
        pc.on_child_solved(parent, action, false, res.down_lp);
        pc.on_child_solved(parent, action, true, res.up_lp);
      }
      obs = res.done ? std::nullopt : std::optional<BranchObs>(std::move(*res.obs));
    }
  }
  return out;
}

double evaluate_policy(const QNetParams& params, const std::vector<MilpInstance>& instances,
                       double work_limit, const BnbOptions& options) {
  if (instances.empty())
    throw std::invalid_argument("evaluate_policy: instance list must not be empty");
  if (!(work_limit > 0.0) || !std::isfinite(work_limit))
    throw std::invalid_argument("evaluate_policy: work_limit must be positive and finite");
  StableSum total;
  for (const MilpInstance& inst : instances) {
    BnbEnv env(inst, BnbLimits{work_limit, -1}, options);
    std::optional<BranchObs> obs = env.reset();
    StableSum episode_return;
    while (obs) {
      const QForward f = forward(params, obs->state);
      const int action = masked_argmax(f.q, obs->candidates);
      BnbEnv::StepResult res = env.step(action);
      episode_return.add(res.reward);
      obs = res.done ? std::nullopt : std::optional<BranchObs>(std::move(*res.obs));
    }
    total.add(episode_return.value());
  }
  return total.value() / static_cast<double>(instances.size());
}

int GreedyQPolicy::select(const BranchQuery& query) {
  const BipartiteState state = extract(query.instance(), query.node().lp,
                                       query.node().bound_overrides, query.candidates());
  const QForward f = forward(params_, state);
  return masked_argmax(f.q, query.candidates());
}

TrainReport train(const TrainerConfig& cfg, std::vector<Transition> demos,
                  const InstanceSampler& sampler,
                  const std::vector<MilpInstance>& eval_instances, const TrainHooks& hooks) {
  validate_config(cfg);
  if (eval_instances.empty())
    throw std::invalid_argument("train: eval_instances must not be empty");
  for (Transition& d : demos) d.origin = Transition::Origin::kDemo;

  QNetParams theta =
      init_qnet(kVarFeatDim, kConsFeatDim, kEdgeFeatDim, cfg.hidden, derive_seed(cfg.seed, 1));
  QNetParams target = theta;    // hard copies of the initial online weights
  QNetParams superior = theta;  // promoted only on evaluation records
  AdamState opt = make_adam(theta);
  ReplayBuffer replay(std::move(demos), cfg.capacity_self);
  Rng act_rng(derive_seed(cfg.seed, 2));
  Rng sample_rng(derive_seed(cfg.seed, 3));

  const long long warmup = cfg.warmup_steps >= 0 ? cfg.warmup_steps : cfg.total_steps / 4;
  const double lambda = cfg.ablation == Ablation::kDqfdws ? cfg.lambda_s : 0.0;

  TrainReport report;
  double g0 = cfg.g0_fixed.value_or(0.0);
  bool g0_ready = cfg.g0_fixed.has_value();
  double g_best = 0.0;

  std::vector<Transition> temp;
  long long episode = 0;
  std::unique_ptr<BnbEnv> env;
  std::optional<BranchObs> obs;
  auto next_episode = [&]() {
    for (int barren = 0; barren < kMaxBarrenEpisodes; ++barren) {
      const MilpInstance inst = sampler(episode);
      ++episode;
      env = std::make_unique<BnbEnv>(inst, BnbLimits{cfg.episode_work_limit, -1}, BnbOptions{});
      obs = env->reset();
      if (obs) return;
    }
    throw std::runtime_error("train: sampler yielded only decision-free episodes");
  };
  if (cfg.total_steps > 0) next_episode();

  for (long long t = 1; t <= cfg.total_steps; ++t) {
    // Act ε-greedily and bank the transition in the episode's temporary list.
    const QForward act_f = forward(theta, obs->state);
    const int action = epsilon_greedy(act_f.q, obs->candidates, cfg.epsilon, act_rng);
    Transition tr;
    tr.state = std::move(obs->state);
    tr.action = action;
    const BnbEnv::StepResult res = env->step(action);
    tr.reward = res.reward;
    tr.done = res.done;
    if (!res.done) {
      tr.next_state = res.obs->state;
      tr.next_candidates = res.obs->candidates;
    }
    temp.push_back(std::move(tr));
    if (res.done) {
      next_episode();
    } else {
      obs = std::move(res.obs);
    }

    // One replay gradient step per action, once there is anything to replay.
    if (replay.size() == 0) {
      ++report.empty_buffer_steps;
    } else {
      const std::vector<Transition> batch = replay.sample(cfg.batch_size, sample_rng);
      const LossResult loss = loss_and_grads(theta, target, superior, batch, cfg.gamma, lambda);
      adam_step(opt, theta, loss.grads, cfg.lr);
    }

    if (t % cfg.target_period == 0) target = theta;

    if (t % cfg.eval_period == 0) {
      const double g = evaluate_policy(theta, eval_instances, cfg.episode_work_limit);
      bool admitted = false;
      double g0_gate = g0;
      if (!g0_ready) {
        // First record seeds the moving threshold; nothing can clear it yet.
        g0_gate = g;
        g0 = g;
        g0_ready = true;
      } else {
        admitted = g > g0 && t > warmup;
        if (!cfg.g0_fixed) g0 = cfg.g0_decay * g0 + (1.0 - cfg.g0_decay) * g;
      }
      replay.flush_episode(temp, admitted);
      if (admitted) ++report.admitted_flushes;
      bool promoted = false;
      if (g > g_best) {
        superior = theta;
        g_best = g;
        promoted = true;
      }
      report.eval_curve.emplace_back(t, g);
      if (hooks.after_eval) hooks.after_eval(t, g, g0_gate, admitted, promoted);
    }
    if (hooks.after_step) hooks.after_step(t, theta, target, superior);
  }

  report.g_best = g_best;
  report.online = std::move(theta);
  report.superior = std::move(superior);
  return report;
}

}  // namespace qbranch
