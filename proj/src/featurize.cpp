/* SPDX-License-Identifier: Apache-2.0 */

#include "qbranch/featurize.hpp"

#include <algorithm>
#include <cmath>

#include "qbranch/common.hpp"

namespace qbranch {

namespace {

double clip_unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

BipartiteState extract(const MilpInstance& instance, const LpSolution& lp,
                       const BoundOverrides& overrides, const std::vector<int>& candidates) {
  BipartiteState s;
  s.n_cons = instance.n_cons;
  s.n_vars = instance.n_vars;

  double obj_norm = 0.0;
  for (double c : instance.obj) obj_norm = std::max(obj_norm, std::abs(c));
  if (obj_norm == 0.0) obj_norm = 1.0;
  double x_norm = 1.0;
  for (double v : lp.x) x_norm = std::max(x_norm, std::abs(v));

  s.var_feats.resize(instance.n_vars);
  for (int j = 0; j < instance.n_vars; ++j) {
    const auto [lo, up] = effective_bounds(instance, overrides, j);
    const double xj = lp.x[j];
    auto& f = s.var_feats[j];
    f[0] = instance.obj[j] / obj_norm;
    f[1] = clip_unit(xj / x_norm);
    f[2] = fractionality_of(xj);
    f[3] = instance.integer_mask[j] ? 1.0 : 0.0;
    f[4] = (std::isfinite(lo) && std::abs(xj - lo) <= 1e-7) ? 1.0 : 0.0;
    f[5] = (std::isfinite(up) && std::abs(xj - up) <= 1e-7) ? 1.0 : 0.0;
    f[6] = std::isfinite(lo) ? 1.0 : 0.0;
    f[7] = std::isfinite(up) ? 1.0 : 0.0;
  }

  s.cons_feats.resize(instance.n_cons);
  for (int i = 0; i < instance.n_cons; ++i) {
    double norm_sq = 0.0;
    StableSum lhs;
    for (const MatrixEntry& e : instance.rows[i]) {
      norm_sq += e.coef * e.coef;
      lhs.add(e.coef * lp.x[e.col]);
    }
    const double row_norm = std::sqrt(norm_sq);
    const double b = instance.rhs[i];
    const double slack = b - lhs.value();
    const double dual = lp.duals.empty() ? 0.0 : lp.duals[i];
    auto& f = s.cons_feats[i];
    f[0] = b / std::max(1.0, row_norm);
    f[1] = clip_unit(slack / std::max(1.0, std::abs(b)));
    f[2] = std::abs(slack) <= 1e-7 ? 1.0 : 0.0;
    f[3] = dual > 1e-9 ? 1.0 : (dual < -1e-9 ? -1.0 : 0.0);

    for (const MatrixEntry& e : instance.rows[i])
      s.edges.push_back({i, e.col, {e.coef / row_norm}});
  }

  s.candidate_mask.assign(instance.n_vars, false);
  for (int j : candidates) s.candidate_mask[j] = true;
  return s;
}

}  // namespace qbranch
