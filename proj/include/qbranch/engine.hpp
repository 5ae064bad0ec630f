/* SPDX-License-Identifier: Apache-2.0 */
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "qbranch/bnb_node.hpp"
#include "qbranch/common.hpp"
#include "qbranch/featurize.hpp"
#include "qbranch/instance.hpp"
#include "qbranch/simplex.hpp"

namespace qbranch {

struct BnbOptions {
  SimplexOptions lp;
  double int_tol = 1e-6;
  bool wall_clock = false;  // work axis in seconds instead of simplex iterations
};

/// Integer-masked variables whose LP value is fractional beyond int_tol,
/// ascending. Empty means the node's LP point is integral.
std::vector<int> branching_candidates(const MilpInstance& instance, const LpSolution& lp,
                                      double int_tol = 1e-6);

/// Floor/ceil split on `var`. Children carry the tightened override maps and
/// an unsolved LP (status fields meaningless until the search solves them).
/// Throws std::invalid_argument unless var is a branching candidate.
std::pair<BnbNode, BnbNode> branch(const MilpInstance& instance, const BnbNode& node, int var,
                                   double int_tol = 1e-6);

/// ∫₀ᵀ (z_t − z_ref) dt for the piecewise-constant curve given by `trace`:
/// z_t = z_ref before the first breakpoint and z_t = trace[k].bound on
/// [trace[k].work, trace[k+1].work). Segments past T are clipped off, so a
/// trace extending beyond the horizon integrates only up to T. Throws
/// std::invalid_argument on non-finite entries, decreasing work or bound
/// coordinates, or T < 0.
double dual_integral_score(const std::vector<TracePoint>& trace, double horizon, double z_ref);

class BnbSearch;

/// Read-only view of a pending branching decision handed to policies.
/// probe_child solves one child LP without branching; its iterations are
/// charged to the search's work clock, as strong branching must pay for its
/// lookahead.
class BranchQuery {
 public:
  const MilpInstance& instance() const;
  const BnbNode& node() const;
  const std::vector<int>& candidates() const;
  LpSolution probe_child(int var, bool up) const;

 private:
  friend class BnbSearch;
  explicit BranchQuery(BnbSearch& search) : search_(search) {}
  BnbSearch& search_;
};

/// Variable-selection rule. select must return one of query.candidates().
/// on_child_solved reports both children of the taken branch (up=false then
/// true), letting history-based rules accumulate observed gains.
class BranchingPolicy {
 public:
  virtual ~BranchingPolicy() = default;
  virtual int select(const BranchQuery& query) = 0;
  virtual void on_child_solved(const BnbNode& parent, int var, bool up,
                               const LpSolution& child_lp) {
    (void)parent;
    (void)var;
    (void)up;
    (void)child_lp;
  }
};

/// Best-bound branch-and-bound over one instance, advanced decision by
/// decision so both the batch solver and the step-wise environment share one
/// search. Nodes are popped lowest dual bound first (ties by node id); child
/// LPs are solved on insertion; integral LP points round to lattice points
/// and must re-verify feasibility at the enumeration tolerance before
/// becoming incumbents (guaranteed to succeed when A and b are integral;
/// otherwise the node is fathomed without an incumbent).
///
/// The relaxation must be bounded: an unbounded root throws
/// std::runtime_error. A node LP hitting its iteration limit ends the search
/// with status kLimit.
class BnbSearch {
 public:
  BnbSearch(const MilpInstance& instance, const BnbLimits& limits, const BnbOptions& options = {});
  ~BnbSearch();
  BnbSearch(const BnbSearch&) = delete;
  BnbSearch& operator=(const BnbSearch&) = delete;

  /// Runs until a node needs a branching decision (true) or the search
  /// terminates (false).
  bool advance();
  bool done() const;

  /// The pending decision; valid only after advance() returned true.
  const BnbNode& current() const;
  const std::vector<int>& current_candidates() const;
  BranchQuery query();

  /// Solves one child of the pending node without branching, charging its
  /// work to the clock.
  LpSolution probe_child(int var, bool up);

  /// Branches the pending node on var, solving and inserting both children.
  /// Returns the solved child LPs (down, up). The next advance() resumes
  /// node selection.
  std::pair<LpSolution, LpSolution> apply_branch(int var);

  double work() const;
  double dual_bound() const;
  double z_ref() const;
  const std::vector<TracePoint>& trace() const;
  const MilpInstance& instance() const;

  /// Snapshot of the search outcome so far; status is kLimit until the
  /// search finishes.
  SolveReport report() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Runs a full solve under `policy`. The report's dual_integral uses the
/// work horizon limits.max_work when finite (flat extension past the last
/// breakpoint), else the total work at termination.
SolveReport solve(const MilpInstance& instance, BranchingPolicy& policy, const BnbLimits& limits,
                  const BnbOptions& options = {});

/// Observation of one pending branching decision.
struct BranchObs {
  BipartiteState state;
  std::vector<int> candidates;
  long long node_id = -1;
};

/// Episodic view of the search for learning: each step picks a candidate at
/// the pending decision, and the reward is the increment of the clipped dual
/// integral between consecutive decisions. Requires a finite max_work
/// horizon T; the terminal step's reward includes the flat extension of the
/// final bound to T, so the undiscounted episode return telescopes to
/// dual_integral_score(trace, T, z_ref).
class BnbEnv {
 public:
  struct StepResult {
    std::optional<BranchObs> obs;  // absent at terminal
    double reward = 0.0;
    bool done = false;
    LpSolution down_lp, up_lp;  // the branch's solved children, for history-based experts
  };

  BnbEnv(const MilpInstance& instance, const BnbLimits& limits, const BnbOptions& options = {});
  ~BnbEnv();
  BnbEnv(const BnbEnv&) = delete;
  BnbEnv& operator=(const BnbEnv&) = delete;

  /// Starts the episode. Absent observation: solved without any decision
  /// (report() is then final and done() is true).
  std::optional<BranchObs> reset();

  /// Branches on `var` (must be a current candidate) and advances to the
  /// next decision or termination.
  StepResult step(int var);

  bool done() const;
  const SolveReport& report() const;  // valid once done
  const MilpInstance& instance() const;

  /// Policy view of the pending decision, e.g. to run strong branching as
  /// the acting expert. Probe work charged through it shows up in the
  /// following step's reward span, like any other work.
  BranchQuery query();

 private:
  BranchObs make_obs() const;
  void settle_integral();

  MilpInstance instance_;
  BnbLimits limits_;
  BnbOptions options_;
  std::unique_ptr<BnbSearch> search_;
  StableSum integral_;
  std::size_t integrated_points_ = 0;
  double last_snapshot_ = 0.0;
  bool started_ = false;
  std::optional<SolveReport> final_report_;
};

}  // namespace qbranch
