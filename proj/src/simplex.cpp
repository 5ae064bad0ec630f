/* SPDX-License-Identifier: Apache-2.0 */

#include "qbranch/simplex.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

#include "qbranch/common.hpp"

namespace qbranch {

std::pair<double, double> effective_bounds(const MilpInstance& inst,
                                           const BoundOverrides& overrides, int j) {
  if (auto it = overrides.find(j); it != overrides.end()) return it->second;
  return {inst.lower[j], inst.upper[j]};
}

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kDegenerateStep = 1e-11;

/// Working state of one bounded-variable simplex solve. Columns are indexed
/// structural (0..n), slack (n..n+m), artificial (n+m..). The basis inverse
/// is kept dense and refactored periodically.
class Solver {
 public:
  Solver(const MilpInstance& inst, const BoundOverrides& overrides, const SimplexOptions& opt)
      : inst_(inst), opt_(opt), n_(inst.n_vars), m_(inst.n_cons) {
    const int n_slack = m_;
    cols_.assign(n_ + n_slack, std::vector<double>(m_, 0.0));
    for (int i = 0; i < m_; ++i)
      for (const MatrixEntry& e : inst.rows[i]) cols_[e.col][i] = e.coef;
    for (int i = 0; i < m_; ++i) cols_[n_ + i][i] = 1.0;

    lb_.resize(n_ + n_slack);
    ub_.resize(n_ + n_slack);
    for (int j = 0; j < n_; ++j) {
      const auto [lo, up] = effective_bounds(inst, overrides, j);
      if (lo > up) throw std::invalid_argument("solve_relaxation: override crosses bounds");
      lb_[j] = lo;
      ub_[j] = up;
    }
    for (int i = 0; i < m_; ++i) {
      lb_[n_ + i] = 0.0;
      ub_[n_ + i] = kInf;
    }

    status_.assign(n_ + n_slack, VarStatus::kBasic);
    value_.assign(n_ + n_slack, 0.0);
    for (int j = 0; j < n_; ++j) {
      if (std::isfinite(lb_[j])) {
        status_[j] = VarStatus::kAtLower;
        value_[j] = lb_[j];
      } else if (std::isfinite(ub_[j])) {
        status_[j] = VarStatus::kAtUpper;
        value_[j] = ub_[j];
      } else {
        status_[j] = VarStatus::kFree;
        value_[j] = 0.0;
      }
    }

    basis_.resize(m_);
    binv_.assign(m_, std::vector<double>(m_, 0.0));
    for (int i = 0; i < m_; ++i) {
      basis_[i] = n_ + i;
      binv_[i][i] = 1.0;
    }

    // Slack values for the chosen nonbasic point; negative entries get an
    // artificial column carrying the row until phase 1 clears it.
    for (int i = 0; i < m_; ++i) {
      StableSum lhs;
      for (const MatrixEntry& e : inst.rows[i]) lhs.add(e.coef * value_[e.col]);
      const double slack = inst.rhs[i] - lhs.value();
      value_[n_ + i] = slack;
      if (slack < 0.0) {
        const int art = static_cast<int>(cols_.size());
        cols_.emplace_back(m_, 0.0);
        cols_.back()[i] = -1.0;
        lb_.push_back(0.0);
        ub_.push_back(kInf);
        status_.push_back(VarStatus::kBasic);
        value_.push_back(-slack);
        artificials_.push_back(art);
        status_[n_ + i] = VarStatus::kAtLower;
        value_[n_ + i] = 0.0;
        basis_[i] = art;
        binv_[i][i] = -1.0;
      }
    }

    iteration_limit_ = opt.iter_limit_factor * (n_ + m_);
  }

  LpSolution run() {
    LpSolution sol;
    if (!artificials_.empty()) {
      std::vector<double> cost(cols_.size(), 0.0);
      for (int a : artificials_) cost[a] = 1.0;
      const Outcome out = optimize(cost);
      if (out == Outcome::kIterationLimit) return finish(sol, LpStatus::kIterationLimit);
      assert(out == Outcome::kOptimal);
      StableSum infeas;
      for (int a : artificials_) infeas.add(value_[a]);
      if (infeas.value() > opt_.tol_feas) return finish(sol, LpStatus::kInfeasible);
      for (int a : artificials_) {
        ub_[a] = 0.0;
        value_[a] = 0.0;
        if (status_[a] != VarStatus::kBasic) status_[a] = VarStatus::kAtLower;
      }
    }

    std::vector<double> cost(cols_.size(), 0.0);
    for (int j = 0; j < n_; ++j) cost[j] = inst_.obj[j];
    const Outcome out = optimize(cost);
    if (out == Outcome::kIterationLimit) return finish(sol, LpStatus::kIterationLimit);
    if (out == Outcome::kUnbounded) return finish(sol, LpStatus::kUnbounded);

    const std::vector<double> y = duals(cost);
    sol.duals.resize(m_);
    for (int i = 0; i < m_; ++i) sol.duals[i] = -y[i];
    sol.reduced_costs.resize(n_);
    for (int j = 0; j < n_; ++j) sol.reduced_costs[j] = cost[j] - column_dot(y, j);
    return finish(sol, LpStatus::kOptimal);
  }

 private:
  enum class Outcome { kOptimal, kUnbounded, kIterationLimit };

  LpSolution finish(LpSolution& sol, LpStatus st) {
    sol.status = st;
    sol.x.assign(value_.begin(), value_.begin() + n_);
    StableSum obj;
    for (int j = 0; j < n_; ++j) obj.add(inst_.obj[j] * sol.x[j]);
    sol.obj_value = obj.value();
    sol.iterations = iterations_;
    sol.var_basis.assign(status_.begin(), status_.begin() + n_);
    sol.row_basis.assign(status_.begin() + n_, status_.begin() + n_ + m_);
    return sol;
  }

  std::vector<double> duals(const std::vector<double>& cost) const {
    std::vector<double> y(m_, 0.0);
    for (int k = 0; k < m_; ++k) {
      const double ck = cost[basis_[k]];
      if (ck == 0.0) continue;
      for (int i = 0; i < m_; ++i) y[i] += ck * binv_[k][i];
    }
    return y;
  }

  double column_dot(const std::vector<double>& y, int j) const {
    double acc = 0.0;
    const auto& col = cols_[j];
    for (int i = 0; i < m_; ++i) acc += y[i] * col[i];
    return acc;
  }

  Outcome optimize(const std::vector<double>& cost) {
    const int total = static_cast<int>(cols_.size());
    std::vector<double> w(m_);
    while (true) {
      if (iterations_ >= iteration_limit_) return Outcome::kIterationLimit;

      const std::vector<double> y = duals(cost);
      int enter = -1;
      int dir = 0;
      double best_violation = 0.0;
      for (int j = 0; j < total; ++j) {
        if (status_[j] == VarStatus::kBasic) continue;
        if (lb_[j] == ub_[j]) continue;  // fixed, never enters
        const double d = cost[j] - column_dot(y, j);
        double violation = 0.0;
        int cand_dir = 0;
        switch (status_[j]) {
          case VarStatus::kAtLower:
            if (d < -opt_.tol_opt) {
              violation = -d;
              cand_dir = +1;
            }
            break;
          case VarStatus::kAtUpper:
            if (d > opt_.tol_opt) {
              violation = d;
              cand_dir = -1;
            }
            break;
          case VarStatus::kFree:
            if (std::abs(d) > opt_.tol_opt) {
              violation = std::abs(d);
              cand_dir = d < 0.0 ? +1 : -1;
            }
            break;
          case VarStatus::kBasic:
            break;
        }
        if (cand_dir == 0) continue;
        if (bland_) {
          enter = j;
          dir = cand_dir;
          break;
        }
        if (violation > best_violation) {
          best_violation = violation;
          enter = j;
          dir = cand_dir;
        }
      }
      if (enter < 0) return Outcome::kOptimal;

      // w = B^{-1} a_enter
      for (int k = 0; k < m_; ++k) {
        double acc = 0.0;
        const auto& row = binv_[k];
        const auto& col = cols_[enter];
        for (int i = 0; i < m_; ++i) acc += row[i] * col[i];
        w[k] = acc;
      }

      // Ratio test: the entering variable moves by delta in direction dir,
      // basic k moves at rate -dir*w[k]; the tightest bound blocks.
      double delta = kInf;
      if (std::isfinite(lb_[enter]) && std::isfinite(ub_[enter])) delta = ub_[enter] - lb_[enter];
      int leave_row = -1;
      bool leave_to_upper = false;
      for (int k = 0; k < m_; ++k) {
        const double rate = -dir * w[k];
        const int jb = basis_[k];
        double lim;
        bool to_upper;
        if (rate > kPivotTol) {
          if (!std::isfinite(ub_[jb])) continue;
          lim = (ub_[jb] - value_[jb]) / rate;
          to_upper = true;
        } else if (rate < -kPivotTol) {
          if (!std::isfinite(lb_[jb])) continue;
          lim = (lb_[jb] - value_[jb]) / rate;
          to_upper = false;
        } else {
          continue;
        }
        if (lim < 0.0) lim = 0.0;  // basic sits marginally past its bound
        const bool strictly_better = lim < delta - kDegenerateStep;
        const bool tie = !strictly_better && lim < delta + kDegenerateStep;
        if (strictly_better || (tie && (leave_row < 0 || jb < basis_[leave_row]))) {
          delta = lim;
          leave_row = k;
          leave_to_upper = to_upper;
        }
      }

      if (!std::isfinite(delta)) return Outcome::kUnbounded;

      value_[enter] += dir * delta;
      for (int k = 0; k < m_; ++k) value_[basis_[k]] -= dir * w[k] * delta;

      if (leave_row < 0) {
        // Bound flip, no basis change.
        status_[enter] = dir > 0 ? VarStatus::kAtUpper : VarStatus::kAtLower;
        value_[enter] = dir > 0 ? ub_[enter] : lb_[enter];
      } else {
        const int leaving = basis_[leave_row];
        status_[leaving] = leave_to_upper ? VarStatus::kAtUpper : VarStatus::kAtLower;
        value_[leaving] = leave_to_upper ? ub_[leaving] : lb_[leaving];
        basis_[leave_row] = enter;
        status_[enter] = VarStatus::kBasic;

        const double pivot = w[leave_row];
        auto& prow = binv_[leave_row];
        for (int i = 0; i < m_; ++i) prow[i] /= pivot;
        for (int k = 0; k < m_; ++k) {
          if (k == leave_row) continue;
          const double factor = w[k];
          if (factor == 0.0) continue;
          auto& row = binv_[k];
          for (int i = 0; i < m_; ++i) row[i] -= factor * prow[i];
        }
        if (++pivots_since_refactor_ >= opt_.refactor_period) refactor();
      }

      ++iterations_;
      if (delta <= kDegenerateStep) {
        if (++degenerate_run_ > opt_.degeneracy_threshold) bland_ = true;
      } else {
        degenerate_run_ = 0;
      }
    }
  }

  /// Rebuilds the basis inverse by Gauss-Jordan with partial pivoting and
  /// recomputes basic values from the nonbasic point.
  void refactor() {
    pivots_since_refactor_ = 0;
    std::vector<std::vector<double>> work(m_, std::vector<double>(2 * m_, 0.0));
    for (int i = 0; i < m_; ++i) {
      for (int k = 0; k < m_; ++k) work[i][k] = cols_[basis_[k]][i];
      work[i][m_ + i] = 1.0;
    }
    for (int col = 0; col < m_; ++col) {
      int piv = col;
      for (int r = col + 1; r < m_; ++r)
        if (std::abs(work[r][col]) > std::abs(work[piv][col])) piv = r;
      if (std::abs(work[piv][col]) < 1e-12) throw std::runtime_error("simplex: singular basis");
      std::swap(work[col], work[piv]);
      const double d = work[col][col];
      for (int c = 0; c < 2 * m_; ++c) work[col][c] /= d;
      for (int r = 0; r < m_; ++r) {
        if (r == col) continue;
        const double f = work[r][col];
        if (f == 0.0) continue;
        for (int c = 0; c < 2 * m_; ++c) work[r][c] -= f * work[col][c];
      }
    }
    // binv rows follow basis order: row k of binv is row k of B^{-1} where
    // B's column k is cols_[basis_[k]]; the inverse solved above has that
    // layout already.
    for (int k = 0; k < m_; ++k)
      for (int i = 0; i < m_; ++i) binv_[k][i] = work[k][m_ + i];

    std::vector<double> residual(m_);
    for (int i = 0; i < m_; ++i) {
      StableSum lhs;
      for (int j = 0; j < static_cast<int>(cols_.size()); ++j) {
        if (status_[j] == VarStatus::kBasic) continue;
        if (value_[j] != 0.0) lhs.add(cols_[j][i] * value_[j]);
      }
      residual[i] = inst_.rhs[i] - lhs.value();
    }
    for (int k = 0; k < m_; ++k) {
      StableSum xb;
      for (int i = 0; i < m_; ++i) xb.add(binv_[k][i] * residual[i]);
      value_[basis_[k]] = xb.value();
    }
  }

  const MilpInstance& inst_;
  const SimplexOptions& opt_;
  int n_ = 0;
  int m_ = 0;
  std::vector<std::vector<double>> cols_;
  std::vector<double> lb_, ub_;
  std::vector<VarStatus> status_;
  std::vector<double> value_;
  std::vector<int> basis_;
  std::vector<std::vector<double>> binv_;
  std::vector<int> artificials_;
  int iterations_ = 0;
  int iteration_limit_ = 0;
  int degenerate_run_ = 0;
  int pivots_since_refactor_ = 0;
  bool bland_ = false;
};

}  // namespace

LpSolution solve_relaxation(const MilpInstance& instance, const BoundOverrides& overrides,
                            const SimplexOptions& options) {
  Solver solver(instance, overrides, options);
  return solver.run();
}

}  // namespace qbranch
