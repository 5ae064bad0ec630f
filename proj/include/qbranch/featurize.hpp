/* SPDX-License-Identifier: Apache-2.0 */
#pragma once

#include <array>
#include <vector>

#include "qbranch/instance.hpp"
#include "qbranch/simplex.hpp"

namespace qbranch {

inline constexpr int kConsFeatDim = 4;
inline constexpr int kVarFeatDim = 8;
inline constexpr int kEdgeFeatDim = 1;

/// Bipartite constraint-variable graph with per-node features, the network's
/// input. Rows mirror the instance: cons_feats[i] describes row i,
/// var_feats[j] variable j, edges exactly the nonzeros of A.
struct BipartiteState {
  int n_cons = 0;
  int n_vars = 0;
  std::vector<std::array<double, kConsFeatDim>> cons_feats;
  std::vector<std::array<double, kVarFeatDim>> var_feats;

  struct Edge {
    int row = 0;
    int col = 0;
    std::array<double, kEdgeFeatDim> feat{};
    bool operator==(const Edge&) const = default;
  };
  std::vector<Edge> edges;
  std::vector<bool> candidate_mask;

  bool operator==(const BipartiteState&) const = default;
};

/// Features of one solved node.
///
/// Variable j: [ c_j / ‖c‖∞;  x̌_j / max(1, ‖x̌‖∞) clipped to [−1,1];
///   fractionality of x̌_j;  integer flag;  at-lower flag;  at-upper flag;
///   finite-lower flag;  finite-upper flag ]   (bounds are the node's)
/// Constraint i: [ b_i / max(1, ‖row_i‖₂);  slack_i / max(1, |b_i|) clipped;
///   tight flag;  sign of dual_i ]
/// Edge (i, j): [ A_ij / ‖row_i‖₂ ]
///
/// ‖c‖∞ = 0 degrades to 1 so an all-zero objective yields zeros. Every
/// output is finite and the normalized entries stay within [−1, 1].
BipartiteState extract(const MilpInstance& instance, const LpSolution& lp,
                       const BoundOverrides& overrides, const std::vector<int>& candidates);

}  // namespace qbranch
