/* SPDX-License-Identifier: Apache-2.0 */
#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "qbranch/simplex.hpp"

namespace qbranch {

/// One search-tree node. `bound_overrides` accumulates every branching bound
/// change from the root; `bound` is the node's dual bound, the maximum LP
/// objective along its path (so bounds are monotone even when a child LP
/// resolves marginally below its parent's).
struct BnbNode {
  long long node_id = -1;
  long long parent_id = -1;
  BoundOverrides bound_overrides;
  LpSolution lp;
  int depth = 0;
  double bound = 0.0;
};

/// Breakpoint of the piecewise-constant dual-bound curve: the bound equals
/// `bound` from this work time until the next breakpoint.
struct TracePoint {
  double work = 0.0;
  double bound = 0.0;
  bool operator==(const TracePoint&) const = default;
};

struct BnbLimits {
  double max_work = std::numeric_limits<double>::infinity();
  long long max_nodes = -1;  // negative: unlimited
};

enum class SolveStatus { kOptimal, kInfeasible, kLimit };

struct SolveReport {
  SolveStatus status = SolveStatus::kLimit;
  std::optional<std::vector<double>> incumbent;
  double primal_value = std::numeric_limits<double>::infinity();
  double final_dual_bound = std::numeric_limits<double>::infinity();
  long long node_count = 0;
  double total_work = 0.0;
  std::vector<TracePoint> bound_trace;
  double z_ref = 0.0;        // root LP bound, the curve's reference level
  double dual_integral = 0.0;
};

}  // namespace qbranch
