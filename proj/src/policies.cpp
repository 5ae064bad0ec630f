/* SPDX-License-Identifier: Apache-2.0 */

#include "qbranch/policies.hpp"

#include <cmath>
#include <stdexcept>

namespace qbranch {

double product_score(double down_gain, double up_gain) {
  return std::max(down_gain, kScoreEpsilon) * std::max(up_gain, kScoreEpsilon);
}

double PseudocostHistory::psi_up(int var) const {
  if (var < 0 || var >= static_cast<int>(entries.size()) || entries[var].up_count == 0) return 1.0;
  return entries[var].up_sum / static_cast<double>(entries[var].up_count);
}

double PseudocostHistory::psi_down(int var) const {
  if (var < 0 || var >= static_cast<int>(entries.size()) || entries[var].down_count == 0)
    return 1.0;
  return entries[var].down_sum / static_cast<double>(entries[var].down_count);
}

void update_pseudocost(PseudocostHistory& history, int var, bool up, double objective_gain,
                       double fractionality) {
  if (var < 0) throw std::invalid_argument("update_pseudocost: negative var");
  if (!(fractionality > 0.0)) throw std::invalid_argument("update_pseudocost: fractionality <= 0");
  if (var >= static_cast<int>(history.entries.size())) history.entries.resize(var + 1);
  const double unit_gain = std::max(objective_gain, 0.0) / fractionality;
  auto& e = history.entries[var];
  if (up) {
    e.up_sum += unit_gain;
    ++e.up_count;
  } else {
    e.down_sum += unit_gain;
    ++e.down_count;
  }
}

namespace {

double child_gain(const LpSolution& child, double node_obj) {
  switch (child.status) {
    case LpStatus::kInfeasible:
      return kInfeasibleGain;
    case LpStatus::kIterationLimit:
      return 0.0;  // degraded, never a crash
    case LpStatus::kUnbounded:
      throw std::logic_error("strong branching: child LP unbounded");
    case LpStatus::kOptimal:
      break;
  }
  return child.obj_value - node_obj;
}

int argmax_lowest(const std::vector<double>& scores, const std::vector<int>& candidates) {
  int best = candidates[0];
  double best_score = scores[0];
  for (std::size_t k = 1; k < scores.size(); ++k)
    if (scores[k] > best_score) {
      best_score = scores[k];
      best = candidates[k];
    }
  return best;
}

}  // namespace

std::vector<double> strong_branching_scores(const BranchQuery& query) {
  const double node_obj = query.node().lp.obj_value;
  std::vector<double> scores;
  scores.reserve(query.candidates().size());
  for (int var : query.candidates()) {
    const double down = child_gain(query.probe_child(var, false), node_obj);
    const double up = child_gain(query.probe_child(var, true), node_obj);
    scores.push_back(product_score(down, up));
  }
  return scores;
}

std::vector<double> pseudocost_scores(const PseudocostHistory& history, const LpSolution& lp,
                                      const std::vector<int>& candidates) {
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (int var : candidates) {
    const double frac_down = lp.x[var] - std::floor(lp.x[var]);
    const double frac_up = 1.0 - frac_down;
    scores.push_back(product_score(frac_down * history.psi_down(var), frac_up * history.psi_up(var)));
  }
  return scores;
}

int most_infeasible_pick(const LpSolution& lp, const std::vector<int>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("most_infeasible_pick: no candidates");
  int best = candidates[0];
  double best_frac = fractionality_of(lp.x[best]);
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    const double f = fractionality_of(lp.x[candidates[k]]);
    if (f > best_frac) {
      best_frac = f;
      best = candidates[k];
    }
  }
  return best;
}

int random_pick(const std::vector<int>& candidates, Rng& rng) {
  if (candidates.empty()) throw std::invalid_argument("random_pick: no candidates");
  return candidates[rng.index(candidates.size())];
}

int RandomPolicy::select(const BranchQuery& query) {
  return random_pick(query.candidates(), rng_);
}

int MostInfeasiblePolicy::select(const BranchQuery& query) {
  return most_infeasible_pick(query.node().lp, query.candidates());
}

int StrongBranchingPolicy::select(const BranchQuery& query) {
  return argmax_lowest(strong_branching_scores(query), query.candidates());
}

int PseudocostPolicy::select(const BranchQuery& query) {
  return argmax_lowest(pseudocost_scores(history_, query.node().lp, query.candidates()),
                       query.candidates());
}

void PseudocostPolicy::on_child_solved(const BnbNode& parent, int var, bool up,
                                       const LpSolution& child_lp) {
  if (child_lp.status != LpStatus::kOptimal) return;
  const double x = parent.lp.x[var];
  const double frac = up ? std::ceil(x) - x : x - std::floor(x);
  if (!(frac > 0.0)) return;
  update_pseudocost(history_, var, up, child_lp.obj_value - parent.lp.obj_value, frac);
}

}  // namespace qbranch
