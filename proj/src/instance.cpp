/* SPDX-License-Identifier: Apache-2.0 */

#include "qbranch/instance.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "qbranch/common.hpp"

namespace qbranch {

std::optional<std::string> validate(const MilpInstance& inst) {
  auto fail = [](const std::string& msg) { return std::optional<std::string>(msg); };

  if (inst.n_vars < 0 || inst.n_cons < 0) return fail("negative dimension");
  if (static_cast<int>(inst.obj.size()) != inst.n_vars) return fail("obj length mismatch");
  if (static_cast<int>(inst.rows.size()) != inst.n_cons) return fail("row count mismatch");
  if (static_cast<int>(inst.rhs.size()) != inst.n_cons) return fail("rhs length mismatch");
  if (static_cast<int>(inst.lower.size()) != inst.n_vars) return fail("lower length mismatch");
  if (static_cast<int>(inst.upper.size()) != inst.n_vars) return fail("upper length mismatch");
  if (static_cast<int>(inst.integer_mask.size()) != inst.n_vars)
    return fail("integer mask length mismatch");

  for (int j = 0; j < inst.n_vars; ++j) {
    if (!std::isfinite(inst.obj[j])) return fail("non-finite objective at var " + std::to_string(j));
    if (std::isnan(inst.lower[j]) || std::isnan(inst.upper[j]))
      return fail("NaN bound at var " + std::to_string(j));
    if (inst.lower[j] > inst.upper[j]) return fail("bound cross at var " + std::to_string(j));
    if (inst.integer_mask[j]) {
      if (!std::isfinite(inst.lower[j]) || !std::isfinite(inst.upper[j]))
        return fail("integer var " + std::to_string(j) + " has non-finite bound");
      if (inst.lower[j] != std::floor(inst.lower[j]) || inst.upper[j] != std::floor(inst.upper[j]))
        return fail("integer var " + std::to_string(j) + " has fractional bound");
    }
  }
  for (int i = 0; i < inst.n_cons; ++i) {
    if (!std::isfinite(inst.rhs[i])) return fail("non-finite rhs at row " + std::to_string(i));
    int prev_col = -1;
    for (const MatrixEntry& e : inst.rows[i]) {
      if (e.row != i) return fail("entry row tag mismatch in row " + std::to_string(i));
      if (e.col < 0 || e.col >= inst.n_vars)
        return fail("column index out of range in row " + std::to_string(i));
      if (!std::isfinite(e.coef))
        return fail("non-finite coefficient at (" + std::to_string(i) + "," +
                    std::to_string(e.col) + ")");
      if (e.col == prev_col)
        return fail("duplicate coefficient at (" + std::to_string(i) + "," +
                    std::to_string(e.col) + ")");
      if (e.col < prev_col) return fail("unsorted row " + std::to_string(i));
      prev_col = e.col;
    }
  }
  return std::nullopt;
}

MilpInstance generate_set_cover(int n_rows, int n_cols, double density, std::uint64_t seed) {
  if (n_rows < 1) throw std::invalid_argument("generate_set_cover: n_rows must be >= 1");
  if (n_cols < n_rows) throw std::invalid_argument("generate_set_cover: n_cols must be >= n_rows");
  if (!(density > 0.0) || density > 1.0)
    throw std::invalid_argument("generate_set_cover: density must be in (0, 1]");

  Rng rng(derive_seed(seed, 0xC0BEu));
  MilpInstance inst;
  inst.n_vars = n_cols;
  inst.n_cons = n_rows;
  inst.obj.resize(n_cols);
  for (int j = 0; j < n_cols; ++j) inst.obj[j] = rng.uniform(1.0, 100.0);
  inst.rows.resize(n_rows);
  inst.rhs.assign(n_rows, -1.0);
  inst.lower.assign(n_cols, 0.0);
  inst.upper.assign(n_cols, 1.0);
  inst.integer_mask.assign(n_cols, true);

  constexpr int kMaxRowDraws = 1000;
  std::vector<int> cover;
  for (int i = 0; i < n_rows; ++i) {
    cover.clear();
    int attempts = 0;
    while (cover.size() < 2) {
      if (++attempts > kMaxRowDraws)
        throw std::runtime_error(
            "generate_set_cover: density too low to cover row " + std::to_string(i) +
            " twice within " + std::to_string(kMaxRowDraws) + " draws");
      cover.clear();
      for (int j = 0; j < n_cols; ++j) {
        if (rng.bernoulli(density)) cover.push_back(j);
      }
    }
    // Covering row sum x_j >= 1 stored in <= form.
    inst.rows[i].reserve(cover.size());
    for (int j : cover) inst.rows[i].push_back({i, j, -1.0});
  }
  return inst;
}

MilpInstance generate_knapsack_like(int n_items, int n_cons, std::uint64_t seed) {
  if (n_items < 2) throw std::invalid_argument("generate_knapsack_like: n_items must be >= 2");
  if (n_cons < 1) throw std::invalid_argument("generate_knapsack_like: n_cons must be >= 1");

  Rng rng(derive_seed(seed, 0x6A57u));
  MilpInstance inst;
  inst.n_vars = n_items;
  inst.n_cons = n_cons;
  inst.obj.resize(n_items);
  for (int j = 0; j < n_items; ++j) inst.obj[j] = -rng.uniform(1.0, 100.0);
  inst.rows.resize(n_cons);
  inst.rhs.resize(n_cons);
  inst.lower.assign(n_items, 0.0);
  inst.upper.assign(n_items, 1.0);
  inst.integer_mask.assign(n_items, true);

  for (int i = 0; i < n_cons; ++i) {
    StableSum total;
    inst.rows[i].reserve(n_items);
    for (int j = 0; j < n_items; ++j) {
      // Integral weights keep every row sum over lattice points exact.
      const double w = 1.0 + static_cast<double>(rng.index(50));
      inst.rows[i].push_back({i, j, w});
      total.add(w);
    }
    inst.rhs[i] = std::floor(0.5 * total.value());
  }
  return inst;
}

ParseError::ParseError(int line_no, const std::string& what)
    : std::runtime_error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}

std::string write_instance(const MilpInstance& inst) {
  std::string out;
  auto append_line = [&out](const std::string& s) {
    out += s;
    out += '\n';
  };
  std::size_t nnz = 0;
  for (const auto& row : inst.rows) nnz += row.size();
  std::vector<int> int_vars;
  for (int j = 0; j < inst.n_vars; ++j)
    if (inst.integer_mask[j]) int_vars.push_back(j);

  append_line("VARS " + std::to_string(inst.n_vars));
  append_line("CONS " + std::to_string(inst.n_cons));
  append_line("OBJ");
  for (double c : inst.obj) append_line(format_double(c));
  append_line("MAT " + std::to_string(nnz));
  for (const auto& row : inst.rows)
    for (const MatrixEntry& e : row)
      append_line(std::to_string(e.row) + " " + std::to_string(e.col) + " " +
                  format_double(e.coef));
  append_line("RHS");
  for (double b : inst.rhs) append_line(format_double(b));
  append_line("BOUNDS");
  for (int j = 0; j < inst.n_vars; ++j)
    append_line(format_double(inst.lower[j]) + " " + format_double(inst.upper[j]));
  append_line("INT " + std::to_string(int_vars.size()));
  for (int j : int_vars) append_line(std::to_string(j));
  append_line("END");
  return out;
}

namespace {

/// Cursor over the input lines, skipping blanks and '#' comments while
/// remembering 1-based line numbers for error messages.
class LineReader {
 public:
  explicit LineReader(const std::string& text) : in_(text) {}

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto pos = line.find_first_not_of(" \t");
      if (pos == std::string::npos) continue;
      if (line[pos] == '#') continue;
      return true;
    }
    return false;
  }

  int line_no() const { return line_no_; }

 private:
  std::istringstream in_;
  int line_no_ = 0;
};

std::vector<std::string> tokens_of(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream ss(line);
  std::string t;
  while (ss >> t) toks.push_back(t);
  return toks;
}

}  // namespace

MilpInstance read_instance(const std::string& text) {
  LineReader reader(text);
  std::string line;

  auto need_line = [&](const char* what) {
    if (!reader.next(line)) throw ParseError(reader.line_no() + 1, std::string("missing ") + what);
  };
  auto parse_count = [&](const std::string& tok, const char* what) {
    try {
      const long v = std::stol(tok);
      if (v < 0) throw ParseError(reader.line_no(), std::string("negative ") + what);
      return static_cast<int>(v);
    } catch (const ParseError&) {
      throw;
    } catch (...) {
      throw ParseError(reader.line_no(), std::string("bad ") + what + ": " + tok);
    }
  };
  auto parse_value = [&](const std::string& tok) {
    double v;
    if (!try_parse_double(tok, v)) throw ParseError(reader.line_no(), "bad number: " + tok);
    return v;
  };
  auto expect_section = [&](const char* name, int expected_toks) {
    need_line(name);
    auto toks = tokens_of(line);
    if (toks.empty() || toks[0] != name || static_cast<int>(toks.size()) != expected_toks)
      throw ParseError(reader.line_no(), std::string("expected '") + name + "' header");
    return toks;
  };

  MilpInstance inst;
  inst.n_vars = parse_count(expect_section("VARS", 2)[1], "variable count");
  inst.n_cons = parse_count(expect_section("CONS", 2)[1], "constraint count");

  expect_section("OBJ", 1);
  inst.obj.resize(inst.n_vars);
  for (int j = 0; j < inst.n_vars; ++j) {
    need_line("objective entry");
    auto toks = tokens_of(line);
    if (toks.size() != 1) throw ParseError(reader.line_no(), "expected one objective value");
    inst.obj[j] = parse_value(toks[0]);
  }

  const int nnz = parse_count(expect_section("MAT", 2)[1], "nonzero count");
  inst.rows.resize(inst.n_cons);
  for (int k = 0; k < nnz; ++k) {
    need_line("matrix entry");
    auto toks = tokens_of(line);
    if (toks.size() != 3) throw ParseError(reader.line_no(), "expected 'row col coef'");
    MatrixEntry e;
    e.row = parse_count(toks[0], "row index");
    e.col = parse_count(toks[1], "column index");
    e.coef = parse_value(toks[2]);
    if (e.row >= inst.n_cons) throw ParseError(reader.line_no(), "row index out of range");
    if (e.col >= inst.n_vars) throw ParseError(reader.line_no(), "column index out of range");
    inst.rows[e.row].push_back(e);
  }

  expect_section("RHS", 1);
  inst.rhs.resize(inst.n_cons);
  for (int i = 0; i < inst.n_cons; ++i) {
    need_line("rhs entry");
    auto toks = tokens_of(line);
    if (toks.size() != 1) throw ParseError(reader.line_no(), "expected one rhs value");
    inst.rhs[i] = parse_value(toks[0]);
  }

  expect_section("BOUNDS", 1);
  inst.lower.resize(inst.n_vars);
  inst.upper.resize(inst.n_vars);
  for (int j = 0; j < inst.n_vars; ++j) {
    need_line("bounds entry");
    auto toks = tokens_of(line);
    if (toks.size() != 2) throw ParseError(reader.line_no(), "expected 'lower upper'");
    inst.lower[j] = parse_value(toks[0]);
    inst.upper[j] = parse_value(toks[1]);
  }

  const int n_int = parse_count(expect_section("INT", 2)[1], "integer count");
  inst.integer_mask.assign(inst.n_vars, false);
  for (int k = 0; k < n_int; ++k) {
    need_line("integer index");
    auto toks = tokens_of(line);
    if (toks.size() != 1) throw ParseError(reader.line_no(), "expected one variable index");
    const int j = parse_count(toks[0], "variable index");
    if (j >= inst.n_vars) throw ParseError(reader.line_no(), "integer index out of range");
    inst.integer_mask[j] = true;
  }

  need_line("END");
  if (tokens_of(line) != std::vector<std::string>{"END"})
    throw ParseError(reader.line_no(), "expected 'END'");

  // Hand-written files may list a row's entries in any order; duplicates
  // become adjacent after sorting and are reported by validate below.
  for (auto& row : inst.rows)
    std::stable_sort(row.begin(), row.end(),
                     [](const MatrixEntry& a, const MatrixEntry& b) { return a.col < b.col; });

  if (auto violation = validate(inst))
    throw ParseError(reader.line_no(), "instance invalid after parse: " + *violation);
  return inst;
}

}  // namespace qbranch
