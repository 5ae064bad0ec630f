/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <map>
#include <utility>
#include <vector>

#include "qbranch/instance.hpp"

namespace qbranch {

enum class LpStatus { kOptimal, kInfeasible, kUnbounded, kIterationLimit };

enum class VarStatus : unsigned char { kBasic, kAtLower, kAtUpper, kFree };

/// Replacement bounds for a subset of variables, accumulated along a
/// branch-and-bound path. An entry fully replaces the instance bounds of
/// that variable.
using BoundOverrides = std::map<int, std::pair<double, double>>;

struct SimplexOptions {
  double tol_feas = 1e-7;
  double tol_opt = 1e-7;
  double tol_obj = 1e-6;
  /// Iteration budget is iter_limit_factor * (n_vars + n_cons).
  int iter_limit_factor = 50;
  /// Consecutive degenerate pivots before switching to Bland's rule.
  int degeneracy_threshold = 100;
  /// Basis inverse and basic values are recomputed every this many pivots.
  int refactor_period = 64;
};

struct LpSolution {
  LpStatus status = LpStatus::kIterationLimit;
  std::vector<double> x;              // structural values, length n
  double obj_value = 0.0;             // c . x when optimal
  std::vector<double> duals;          // multipliers of Ax <= b, >= 0 at optimality
  std::vector<double> reduced_costs;  // length n
  int iterations = 0;                 // pivots + bound flips, the work unit
  std::vector<VarStatus> var_basis;   // length n
  std::vector<VarStatus> row_basis;   // slack tag per row, length m
};

/// Bounded-variable primal simplex on the LP relaxation of `instance` with
/// `overrides` replacing per-variable bounds. Phase 1 minimizes the sum of
/// artificial infeasibilities; phase 2 the true objective. Dantzig pricing
/// with lowest-index tie breaks, falling back to Bland's rule after a run of
/// degenerate pivots, so repeated solves are bit-identical. Infeasibility,
/// unboundedness and the iteration limit are reported in `status`.
LpSolution solve_relaxation(const MilpInstance& instance, const BoundOverrides& overrides = {},
                            const SimplexOptions& options = {});

/// Bounds of variable j after applying any override.
std::pair<double, double> effective_bounds(const MilpInstance& instance,
                                           const BoundOverrides& overrides, int j);

}  // namespace qbranch
