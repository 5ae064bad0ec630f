/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qbranch {

/// One nonzero of the constraint matrix.
struct MatrixEntry {
  int row = 0;
  int col = 0;
  double coef = 0.0;

  friend bool operator==(const MatrixEntry&, const MatrixEntry&) = default;
};

/// Minimization MILP:
///
///   min  obj . x
///   s.t. A x <= rhs
///        lower <= x <= upper      (entries may be -inf / +inf)
///        x[j] integral where integer_mask[j]
///
/// Maximization inputs must be pre-negated by the caller. Instances are
/// immutable after construction and safe to share across threads.
struct MilpInstance {
  int n_vars = 0;
  int n_cons = 0;
  std::vector<double> obj;
  /// Row-major sparse storage: rows[i] lists entries of constraint i with
  /// strictly increasing column indices.
  std::vector<std::vector<MatrixEntry>> rows;
  std::vector<double> rhs;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<bool> integer_mask;

  int num_integer() const {
    int p = 0;
    for (bool b : integer_mask) p += b ? 1 : 0;
    return p;
  }

  friend bool operator==(const MilpInstance&, const MilpInstance&) = default;
};

/// First violated invariant, or empty when the instance is well formed.
/// Checks: shape consistency, finite matrix entries, no duplicate (row, col)
/// pairs, lower <= upper, and integral finite bounds on integer variables.
std::optional<std::string> validate(const MilpInstance& instance);

/// Random set-cover family: n_cols binary columns with positive costs,
/// n_rows covering constraints (written as -sum x <= -1), each row covered
/// by at least two columns. A row whose Bernoulli(density) draw covers it
/// fewer than twice is redrawn; generation fails once any row exhausts its
/// redraw budget. Deterministic in seed.
MilpInstance generate_set_cover(int n_rows, int n_cols, double density, std::uint64_t seed);

/// Random multi-constraint knapsack in minimization form: binary items with
/// negated profits as objective, n_cons capacity rows at roughly half the
/// total weight. The zero vector is always feasible. Deterministic in seed.
MilpInstance generate_knapsack_like(int n_items, int n_cons, std::uint64_t seed);

/// Line-oriented text serialization. read_instance(write_instance(x)) == x
/// exactly; floats use shortest round-trip decimals. Grammar is documented
/// in README.md. Parse failures throw ParseError with a 1-based line number;
/// a parsed instance that fails validate() throws ParseError as well.
std::string write_instance(const MilpInstance& instance);
MilpInstance read_instance(const std::string& text);

struct ParseError : std::runtime_error {
  ParseError(int line, const std::string& what);
  int line;
};

}  // namespace qbranch
