/* SPDX-License-Identifier: Apache-2.0 */

#include "qbranch/engine.hpp"

#include <cassert>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace qbranch {

namespace {

constexpr double kPruneSlack = 1e-9;
constexpr double kIncumbentFeasTol = 1e-9;  // matches the enumeration convention

/// Area of one piecewise-constant segment [t0, t1) at level z, clipped to
/// the horizon T. Both the environment's incremental accounting and
/// dual_integral_score use exactly this expression so their sums agree
/// term for term.
double segment_area(double t0, double t1, double z, double horizon, double z_ref) {
  return (std::min(t1, horizon) - std::min(t0, horizon)) * (z - z_ref);
}

}  // namespace

std::vector<int> branching_candidates(const MilpInstance& instance, const LpSolution& lp,
                                      double int_tol) {
  std::vector<int> out;
  for (int j = 0; j < instance.n_vars; ++j)
    if (instance.integer_mask[j] && fractionality_of(lp.x[j]) > int_tol) out.push_back(j);
  return out;
}

std::pair<BnbNode, BnbNode> branch(const MilpInstance& instance, const BnbNode& node, int var,
                                   double int_tol) {
  if (var < 0 || var >= instance.n_vars || !instance.integer_mask[var] ||
      fractionality_of(node.lp.x[var]) <= int_tol)
    throw std::invalid_argument("branch: variable is not a branching candidate");

  const auto [lo, up] = effective_bounds(instance, node.bound_overrides, var);
  const double x = node.lp.x[var];

  BnbNode down;
  down.parent_id = node.node_id;
  down.bound_overrides = node.bound_overrides;
  down.bound_overrides[var] = {lo, std::floor(x)};
  down.depth = node.depth + 1;
  down.bound = node.bound;

  BnbNode upc;
  upc.parent_id = node.node_id;
  upc.bound_overrides = node.bound_overrides;
  upc.bound_overrides[var] = {std::ceil(x), up};
  upc.depth = node.depth + 1;
  upc.bound = node.bound;

  return {std::move(down), std::move(upc)};
}

double dual_integral_score(const std::vector<TracePoint>& trace, double horizon, double z_ref) {
  if (!(horizon >= 0.0) || !std::isfinite(z_ref))
    throw std::invalid_argument("dual_integral_score: bad horizon or reference");
  for (std::size_t k = 0; k < trace.size(); ++k) {
    if (!std::isfinite(trace[k].work) || !std::isfinite(trace[k].bound) || trace[k].work < 0.0)
      throw std::invalid_argument("dual_integral_score: non-finite trace point");
    if (k > 0 && (trace[k].work < trace[k - 1].work || trace[k].bound < trace[k - 1].bound))
      throw std::invalid_argument("dual_integral_score: trace must be nondecreasing");
  }
  // z_t = z_ref before the first breakpoint, so that span contributes zero.
  StableSum area;
  for (std::size_t k = 0; k + 1 < trace.size(); ++k)
    area.add(segment_area(trace[k].work, trace[k + 1].work, trace[k].bound, horizon, z_ref));
  if (!trace.empty())
    area.add(segment_area(trace.back().work, horizon, trace.back().bound, horizon, z_ref));
  return area.value();
}

struct BnbSearch::Impl {
  MilpInstance inst;
  BnbLimits limits;
  BnbOptions opt;

  long long next_id = 0;
  std::map<long long, BnbNode> open;
  std::set<std::pair<double, long long>> queue;  // (bound, node_id)
  std::optional<BnbNode> pending;
  std::vector<int> pending_cands;

  std::optional<std::vector<double>> incumbent;
  double primal = kInf;
  double zref = 0.0;
  double iter_work = 0.0;
  long long node_count = 0;
  std::vector<TracePoint> trace;

  bool started = false;
  bool finished = false;
  SolveStatus status = SolveStatus::kLimit;
  double final_dual = -kInf;
  // Lowest bound among subtrees abandoned because a node LP hit its
  // iteration limit; forces a kLimit finish and caps the dual bound.
  double unresolved_bound = kInf;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  explicit Impl(const MilpInstance& instance, const BnbLimits& lim, const BnbOptions& options)
      : inst(instance), limits(lim), opt(options) {}

  double now_work() const {
    if (opt.wall_clock)
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return iter_work;
  }

  double current_dual() const {
    double db = unresolved_bound;
    if (pending) db = std::min(db, pending->bound);
    if (!queue.empty()) db = std::min(db, queue.begin()->first);
    if (db == kInf && incumbent) db = primal;
    return db;
  }

  void record_completion() {
    const double db = current_dual();
    if (!std::isfinite(db)) return;  // nothing proven yet (deep infeasibility)
    trace.push_back({now_work(), db});
  }

  LpSolution solve_node(const BoundOverrides& overrides) {
    LpSolution lp = solve_relaxation(inst, overrides, opt.lp);
    iter_work += static_cast<double>(lp.iterations);
    return lp;
  }

  void prune_by_incumbent() {
    while (!queue.empty()) {
      auto last = std::prev(queue.end());
      if (last->first < primal - kPruneSlack) break;
      open.erase(last->second);
      queue.erase(last);
    }
  }

  /// Rounds an integral LP point to the lattice and admits it as incumbent
  /// if it passes the strict feasibility re-check. With all-integer
  /// variables and integral A and b the check cannot fail for an LP-feasible
  /// point; otherwise a failure abandons the subtree as unresolved, which
  /// caps the dual bound and forces a kLimit finish instead of a false
  /// infeasibility claim.
  void try_incumbent(const BnbNode& node) {
    std::vector<double> x = node.lp.x;
    for (int j = 0; j < inst.n_vars; ++j) {
      if (!inst.integer_mask[j]) continue;
      x[j] = std::clamp(std::round(x[j]), inst.lower[j], inst.upper[j]);
    }
    for (int j = 0; j < inst.n_vars; ++j)
      if (x[j] < inst.lower[j] - kIncumbentFeasTol || x[j] > inst.upper[j] + kIncumbentFeasTol) {
        unresolved_bound = std::min(unresolved_bound, node.bound);
        return;
      }
    for (int i = 0; i < inst.n_cons; ++i) {
      StableSum lhs;
      for (const MatrixEntry& e : inst.rows[i]) lhs.add(e.coef * x[e.col]);
      if (lhs.value() > inst.rhs[i] + kIncumbentFeasTol) {
        unresolved_bound = std::min(unresolved_bound, node.bound);
        return;
      }
    }
    StableSum obj;
    for (int j = 0; j < inst.n_vars; ++j) obj.add(inst.obj[j] * x[j]);
    const double value = obj.value();
    if (value < primal) {
      primal = value;
      incumbent = std::move(x);
      prune_by_incumbent();
    }
  }

  /// Files one solved child: drop, fathom, or enqueue.
  void process_child(BnbNode&& child, double parent_bound) {
    child.node_id = next_id++;
    switch (child.lp.status) {
      case LpStatus::kInfeasible:
        return;
      case LpStatus::kIterationLimit:
        unresolved_bound = std::min(unresolved_bound, parent_bound);
        return;
      case LpStatus::kUnbounded:
        throw std::logic_error("bnb: child LP unbounded under a bounded parent");
      case LpStatus::kOptimal:
        break;
    }
    child.bound = std::max(child.lp.obj_value, parent_bound);
    const std::vector<int> cands = branching_candidates(inst, child.lp, opt.int_tol);
    if (cands.empty()) {
      try_incumbent(child);
      return;
    }
    if (child.bound >= primal - kPruneSlack) return;  // fathomed by bound
    const long long id = child.node_id;
    const double bound = child.bound;
    open.emplace(id, std::move(child));
    queue.insert({bound, id});
  }

  void start_root() {
    started = true;
    BnbNode root;
    root.node_id = next_id++;
    root.lp = solve_node({});
    node_count = 1;
    switch (root.lp.status) {
      case LpStatus::kInfeasible:
        finished = true;
        status = SolveStatus::kInfeasible;
        final_dual = kInf;
        return;
      case LpStatus::kUnbounded:
        throw std::runtime_error("bnb: LP relaxation is unbounded");
      case LpStatus::kIterationLimit:
        finished = true;
        status = SolveStatus::kLimit;
        final_dual = -kInf;
        return;
      case LpStatus::kOptimal:
        break;
    }
    zref = root.lp.obj_value;
    root.bound = root.lp.obj_value;
    const std::vector<int> cands = branching_candidates(inst, root.lp, opt.int_tol);
    if (cands.empty()) {
      try_incumbent(root);
      record_completion();
      return;
    }
    const long long id = root.node_id;
    const double bound = root.bound;
    open.emplace(id, std::move(root));
    queue.insert({bound, id});
    record_completion();
  }

  void finish_limit() {
    finished = true;
    status = SolveStatus::kLimit;
    final_dual = current_dual();
    if (final_dual == kInf && !incumbent) final_dual = -kInf;
  }

  void finish_complete() {
    finished = true;
    if (incumbent) {
      status = SolveStatus::kOptimal;
      final_dual = primal;
      if (trace.empty() || trace.back().bound < primal) trace.push_back({now_work(), primal});
    } else {
      status = SolveStatus::kInfeasible;
      final_dual = kInf;
    }
  }

  bool advance() {
    if (!started) start_root();
    while (true) {
      if (finished) return false;
      if (pending) return true;
      if (unresolved_bound < kInf) {
        finish_limit();
        return false;
      }
      if (queue.empty()) {
        finish_complete();
        return false;
      }
      if (now_work() >= limits.max_work ||
          (limits.max_nodes >= 0 && node_count >= limits.max_nodes)) {
        finish_limit();
        return false;
      }
      const auto it = queue.begin();
      const long long id = it->second;
      auto node_it = open.find(id);
      assert(node_it != open.end());
      BnbNode node = std::move(node_it->second);
      open.erase(node_it);
      queue.erase(it);
      if (node.bound >= primal - kPruneSlack) {
        // Best-bound order: everything left is at least as bad.
        open.clear();
        queue.clear();
        finish_complete();
        return false;
      }
      pending = std::move(node);
      pending_cands = branching_candidates(inst, pending->lp, opt.int_tol);
      assert(!pending_cands.empty());
      return true;
    }
  }

  LpSolution probe_child(int var, bool up) {
    if (!pending) throw std::logic_error("probe_child: no pending decision");
    auto [down, upc] = qbranch::branch(inst, *pending, var, opt.int_tol);
    return solve_node(up ? upc.bound_overrides : down.bound_overrides);
  }

  std::pair<LpSolution, LpSolution> apply_branch(int var) {
    if (!pending) throw std::logic_error("apply_branch: no pending decision");
    bool is_candidate = false;
    for (int c : pending_cands) is_candidate |= (c == var);
    if (!is_candidate) throw std::invalid_argument("apply_branch: var not in candidate set");

    auto [down, upc] = qbranch::branch(inst, *pending, var, opt.int_tol);
    const double parent_bound = pending->bound;

    down.lp = solve_node(down.bound_overrides);
    ++node_count;
    LpSolution down_lp = down.lp;
    process_child(std::move(down), parent_bound);
    // The up child is still unsolved; the parent's bound keeps covering it
    // through `pending`, so this breakpoint cannot overstate the dual bound.
    record_completion();

    upc.lp = solve_node(upc.bound_overrides);
    ++node_count;
    LpSolution up_lp = upc.lp;
    process_child(std::move(upc), parent_bound);
    pending.reset();
    pending_cands.clear();
    record_completion();

    return {std::move(down_lp), std::move(up_lp)};
  }

  SolveReport report() const {
    SolveReport r;
    r.status = finished ? status : SolveStatus::kLimit;
    r.incumbent = incumbent;
    r.primal_value = primal;
    r.final_dual_bound = finished ? final_dual : current_dual();
    r.node_count = node_count;
    r.total_work = now_work();
    r.bound_trace = trace;
    r.z_ref = zref;
    const double horizon = std::isfinite(limits.max_work) ? limits.max_work : r.total_work;
    r.dual_integral = dual_integral_score(trace, horizon, zref);
    return r;
  }
};

BnbSearch::BnbSearch(const MilpInstance& instance, const BnbLimits& limits,
                     const BnbOptions& options)
    : impl_(std::make_unique<Impl>(instance, limits, options)) {
  if (auto violation = validate(instance))
    throw std::invalid_argument("bnb: invalid instance: " + *violation);
}

BnbSearch::~BnbSearch() = default;

bool BnbSearch::advance() { return impl_->advance(); }
bool BnbSearch::done() const { return impl_->finished; }

const BnbNode& BnbSearch::current() const {
  if (!impl_->pending) throw std::logic_error("current: no pending decision");
  return *impl_->pending;
}

const std::vector<int>& BnbSearch::current_candidates() const {
  if (!impl_->pending) throw std::logic_error("current_candidates: no pending decision");
  return impl_->pending_cands;
}

BranchQuery BnbSearch::query() { return BranchQuery(*this); }

LpSolution BnbSearch::probe_child(int var, bool up) { return impl_->probe_child(var, up); }

std::pair<LpSolution, LpSolution> BnbSearch::apply_branch(int var) {
  return impl_->apply_branch(var);
}

double BnbSearch::work() const { return impl_->now_work(); }
double BnbSearch::dual_bound() const {
  return impl_->finished ? impl_->final_dual : impl_->current_dual();
}
double BnbSearch::z_ref() const { return impl_->zref; }
const std::vector<TracePoint>& BnbSearch::trace() const { return impl_->trace; }
const MilpInstance& BnbSearch::instance() const { return impl_->inst; }
SolveReport BnbSearch::report() const { return impl_->report(); }

const MilpInstance& BranchQuery::instance() const { return search_.instance(); }
const BnbNode& BranchQuery::node() const { return search_.current(); }
const std::vector<int>& BranchQuery::candidates() const { return search_.current_candidates(); }
LpSolution BranchQuery::probe_child(int var, bool up) const {
  return search_.probe_child(var, up);
}

SolveReport solve(const MilpInstance& instance, BranchingPolicy& policy, const BnbLimits& limits,
                  const BnbOptions& options) {
  BnbSearch search(instance, limits, options);
  while (search.advance()) {
    const BnbNode parent = search.current();
    const int var = policy.select(search.query());
    const auto [down_lp, up_lp] = search.apply_branch(var);
    policy.on_child_solved(parent, var, false, down_lp);
    policy.on_child_solved(parent, var, true, up_lp);
  }
  return search.report();
}

BnbEnv::BnbEnv(const MilpInstance& instance, const BnbLimits& limits, const BnbOptions& options)
    : instance_(instance), limits_(limits), options_(options) {
  if (!std::isfinite(limits.max_work) || limits.max_work <= 0.0)
    throw std::invalid_argument("BnbEnv: finite positive max_work horizon required");
}

BnbEnv::~BnbEnv() = default;

BranchObs BnbEnv::make_obs() const {
  const BnbNode& node = search_->current();
  BranchObs obs;
  obs.state = extract(instance_, node.lp, node.bound_overrides, search_->current_candidates());
  obs.candidates = search_->current_candidates();
  obs.node_id = node.node_id;
  return obs;
}

void BnbEnv::settle_integral() {
  const auto& trace = search_->trace();
  const double T = limits_.max_work;
  while (integrated_points_ + 1 <= trace.size()) {
    if (integrated_points_ == 0) {
      ++integrated_points_;  // span before the first breakpoint sits at z_ref
      continue;
    }
    const TracePoint& prev = trace[integrated_points_ - 1];
    const TracePoint& next = trace[integrated_points_];
    integral_.add(segment_area(prev.work, next.work, prev.bound, T, search_->z_ref()));
    ++integrated_points_;
  }
  if (search_->done()) {
    if (!trace.empty()) {
      const TracePoint& last = trace.back();
      integral_.add(segment_area(last.work, T, last.bound, T, search_->z_ref()));
    }
    final_report_ = search_->report();
  }
}

std::optional<BranchObs> BnbEnv::reset() {
  search_ = std::make_unique<BnbSearch>(instance_, limits_, options_);
  integral_ = StableSum();
  integrated_points_ = 0;
  last_snapshot_ = 0.0;
  final_report_.reset();
  started_ = true;
  const bool pending = search_->advance();
  settle_integral();
  last_snapshot_ = integral_.value();
  if (!pending) return std::nullopt;
  return make_obs();
}

BnbEnv::StepResult BnbEnv::step(int var) {
  if (!started_ || !search_) throw std::logic_error("step before reset");
  if (search_->done()) throw std::logic_error("step after terminal");
  auto [down_lp, up_lp] = search_->apply_branch(var);
  const bool pending = search_->advance();
  settle_integral();
  StepResult result;
  result.reward = integral_.value() - last_snapshot_;
  last_snapshot_ = integral_.value();
  result.done = !pending;
  if (pending) result.obs = make_obs();
  result.down_lp = std::move(down_lp);
  result.up_lp = std::move(up_lp);
  return result;
}

bool BnbEnv::done() const { return search_ && search_->done(); }

const SolveReport& BnbEnv::report() const {
  if (!final_report_) throw std::logic_error("report before terminal");
  return *final_report_;
}

const MilpInstance& BnbEnv::instance() const { return instance_; }

BranchQuery BnbEnv::query() {
  if (!search_ || search_->done()) throw std::logic_error("query: no pending decision");
  return search_->query();
}

}  // namespace qbranch
