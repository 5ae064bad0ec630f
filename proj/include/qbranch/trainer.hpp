/* SPDX-License-Identifier: Apache-2.0 */
#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "qbranch/engine.hpp"
#include "qbranch/instance.hpp"
#include "qbranch/qnet.hpp"
#include "qbranch/replay.hpp"

namespace qbranch {

/// Which pieces of the full method run: plain double Q-learning, double
/// Q-learning from demonstrations, or demonstrations plus the superior
/// regularization term.
enum class Ablation { kDqn, kDqfd, kDqfdws };

struct TrainerConfig {
  double gamma = 0.99;
  double epsilon = 0.01;
  double lr = 0.001;
  int batch_size = 32;
  long long target_period = 500;  // hard target-network update every this many steps
  long long eval_period = 1000;   // evaluation / admission-gate period
  long long total_steps = 50000;
  std::size_t capacity_self = 100000;
  double lambda_s = 1.0;  // superior-term weight (kDqfdws only)
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::kDqfdws;
  int hidden = 64;
  long long warmup_steps = -1;         // negative: total_steps / 4
  double episode_work_limit = 5000.0;  // per-episode work horizon T
  std::optional<double> g0_fixed;      // fixed admission threshold instead of the moving average
  double g0_decay = 0.9;               // weight kept on the old threshold at each update
};

/// Deterministic source of training instances, indexed by episode.
using InstanceSampler = std::function<MilpInstance(long long episode)>;

/// Seeded covering-instance stream for training and tests.
InstanceSampler cover_sampler(int n_rows, int n_cols, double density, std::uint64_t seed);

/// Test and logging taps into the training loop; either may be empty.
struct TrainHooks {
  std::function<void(long long step, const QNetParams& online, const QNetParams& target,
                     const QNetParams& superior)>
      after_step;
  std::function<void(long long step, double g, double g0_gate, bool admitted, bool promoted)>
      after_eval;
};

struct TrainReport {
  std::vector<std::pair<long long, double>> eval_curve;  // (step, mean held-out return)
  double g_best = 0.0;
  long long admitted_flushes = 0;
  long long empty_buffer_steps = 0;  // acting steps with nothing to learn from yet
  QNetParams online;
  QNetParams superior;
};

/// With probability 1−ε the best candidate by q (ties to the lowest index),
/// else uniform over candidates. Throws std::invalid_argument when
/// candidates is empty or ε is outside [0, 1].
int epsilon_greedy(const std::vector<double>& q, const std::vector<int>& candidates,
                   double epsilon, Rng& rng);

enum class ExpertKind { kStrongBranching, kPseudocost };

/// Runs expert-driven episodes on sampled instances until n_transitions are
/// recorded (the final episode may be cut short). Rewards and next states
/// come from the environment; origin is the demonstration tag. The
/// pseudocost expert learns its history per episode from the solved
/// children. Deterministic in the sampler.
std::vector<Transition> collect_demonstrations(const InstanceSampler& sampler, ExpertKind expert,
                                               long long n_transitions, double work_limit,
                                               const BnbOptions& options = {});

/// Mean greedy episode return of `params` over the instance list; by the
/// telescoping identity this is the mean clipped dual-integral score.
/// Deterministic. Throws std::invalid_argument on an empty list.
double evaluate_policy(const QNetParams& params, const std::vector<MilpInstance>& instances,
                       double work_limit, const BnbOptions& options = {});

/// Branches on the network's argmax; the solve-time face of a checkpoint.
class GreedyQPolicy : public BranchingPolicy {
 public:
  explicit GreedyQPolicy(QNetParams params) : params_(std::move(params)) {}
  int select(const BranchQuery& query) override;

 private:
  QNetParams params_;
};

/// The full training loop: ε-greedy acting into a temporary episode list,
/// one replay-batch gradient step per action (counted, not silently
/// skipped, when the buffer is still empty), hard target updates every
/// target_period steps, and every eval_period steps an evaluation that
/// gates the temporary list into replay (G > G0, never during warmup) and
/// promotes the superior network on strict G_best improvement. The target
/// and superior networks start as copies of the online weights; the
/// admission threshold is seeded by the first evaluation and then moves as
/// an exponentially weighted average unless g0_fixed pins it.
TrainReport train(const TrainerConfig& config, std::vector<Transition> demos,
                  const InstanceSampler& sampler,
                  const std::vector<MilpInstance>& eval_instances, const TrainHooks& hooks = {});

}  // namespace qbranch
