/* SPDX-License-Identifier: Apache-2.0 */
#pragma once

#include <vector>

#include "qbranch/common.hpp"
#include "qbranch/engine.hpp"

namespace qbranch {

/// Clamp floor for branching gains and score for infeasible children. One
/// scoring convention shared by strong branching and pseudocosts.
inline constexpr double kScoreEpsilon = 1e-6;
inline constexpr double kInfeasibleGain = 1e10;

/// max(down_gain, eps) * max(up_gain, eps): the product rule.
double product_score(double down_gain, double up_gain);

/// Per-variable running averages of unit objective gains, kept separately
/// for up and down branchings. A never-updated direction falls back to 1.0.
struct PseudocostHistory {
  struct Entry {
    double up_sum = 0.0;
    double down_sum = 0.0;
    long long up_count = 0;
    long long down_count = 0;
  };
  std::vector<Entry> entries;

  double psi_up(int var) const;
  double psi_down(int var) const;
};

/// Accumulates gain/fractionality into var's directional average. Negative
/// gains (LP noise) clamp to zero.
void update_pseudocost(PseudocostHistory& history, int var, bool up, double objective_gain,
                       double fractionality);

/// Solves both children of every candidate and scores the observed gains
/// with the product rule. Infeasible children count as kInfeasibleGain;
/// children hitting the LP iteration limit degrade to zero gain. All child
/// solves are charged to the search's work clock through the query.
std::vector<double> strong_branching_scores(const BranchQuery& query);

/// PC_j = product_score(frac_down * psi_down, frac_up * psi_up); with no
/// history both psi default to 1 and the rule reduces to fractionality.
std::vector<double> pseudocost_scores(const PseudocostHistory& history, const LpSolution& lp,
                                      const std::vector<int>& candidates);

/// Most fractional candidate, ties to the lowest index.
int most_infeasible_pick(const LpSolution& lp, const std::vector<int>& candidates);

/// Uniform candidate, consuming one draw from rng.
int random_pick(const std::vector<int>& candidates, Rng& rng);

class RandomPolicy : public BranchingPolicy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}
  int select(const BranchQuery& query) override;

 private:
  Rng rng_;
};

class MostInfeasiblePolicy : public BranchingPolicy {
 public:
  int select(const BranchQuery& query) override;
};

class StrongBranchingPolicy : public BranchingPolicy {
 public:
  int select(const BranchQuery& query) override;
};

/// Branches by pseudocost scores, learning gains from the children the
/// engine reports back. Infeasible or unresolved children leave the history
/// untouched.
class PseudocostPolicy : public BranchingPolicy {
 public:
  int select(const BranchQuery& query) override;
  void on_child_solved(const BnbNode& parent, int var, bool up,
                       const LpSolution& child_lp) override;
  const PseudocostHistory& history() const { return history_; }

 private:
  PseudocostHistory history_;
};

}  // namespace qbranch
