/* SPDX-License-Identifier: Apache-2.0 */
#pragma once

#include <string>
#include <vector>

#include "qbranch/common.hpp"
#include "qbranch/featurize.hpp"
#include "qbranch/transition.hpp"

namespace qbranch {

/// Dense affine map y = W x + b, weights row-major [out][in].
struct Linear {
  int in = 0;
  int out = 0;
  std::vector<double> w;
  std::vector<double> b;

  bool operator==(const Linear&) const = default;
};

/// Two-layer perceptron: linear, ReLU, linear (final layer unactivated).
struct Mlp2 {
  Linear l1;
  Linear l2;

  bool operator==(const Mlp2&) const = default;
};

/// Bipartite graph convolution scoring every variable with one scalar.
/// Raw features are embedded to width `hidden` by affine layers; one
/// constraint-side pass updates each constraint from its incident edges,
/// one variable-side pass updates each variable from the refreshed
/// constraints, and the head maps final variable embeddings to scalars.
struct QNetParams {
  int var_dim = 0;
  int cons_dim = 0;
  int edge_dim = 0;
  int hidden = 0;

  Linear var_embed;   // var_dim -> hidden
  Linear cons_embed;  // cons_dim -> hidden
  Linear edge_embed;  // edge_dim -> hidden
  Mlp2 g_c;           // edge message to constraints: 3*hidden -> hidden -> hidden
  Mlp2 f_c;           // constraint update: 2*hidden -> hidden -> hidden
  Mlp2 g_v;           // edge message to variables: 3*hidden -> hidden -> hidden
  Mlp2 f_v;           // variable update: 2*hidden -> hidden -> hidden
  Mlp2 head;          // hidden -> hidden -> 1

  bool operator==(const QNetParams&) const = default;
};

/// Weights ~ uniform(−√(1/fan_in), +√(1/fan_in)), biases zero;
/// deterministic in seed.
QNetParams init_qnet(int var_dim, int cons_dim, int edge_dim, int hidden, std::uint64_t seed);

/// Number of scalars in a network of these shapes.
long long param_count(int var_dim, int cons_dim, int edge_dim, int hidden);
long long param_count(const QNetParams& params);

/// All parameter tensors in one fixed traversal order (embeddings, then
/// g_c, f_c, g_v, f_v, head; weights before biases). Serialization, Adam,
/// and the finite-difference tests all rely on this order.
std::vector<std::vector<double>*> param_tensors(QNetParams& params);
std::vector<const std::vector<double>*> param_tensors(const QNetParams& params);

/// Same shapes as `params`, every entry zero. Gradient accumulator.
QNetParams zeros_like(const QNetParams& params);

/// Forward activations kept for backprop. `q` is the per-variable score.
struct QForward {
  std::vector<std::vector<double>> v0, c0, e0;          // embeddings
  std::vector<std::vector<double>> gc_pre, gc_hid, gc_out;  // per edge
  std::vector<std::vector<double>> cons_sum;            // per constraint
  std::vector<std::vector<double>> fc_pre, fc_hid, c1;  // per constraint
  std::vector<std::vector<double>> gv_pre, gv_hid, gv_out;  // per edge
  std::vector<std::vector<double>> var_sum;             // per variable
  std::vector<std::vector<double>> fv_pre, fv_hid, v1;  // per variable
  std::vector<std::vector<double>> head_pre, head_hid;  // per variable
  std::vector<double> q;
};

QForward forward(const QNetParams& params, const BipartiteState& state);

/// Adds d(loss)/d(params) into `grads` given d(loss)/dq for every variable.
void backward(const QNetParams& params, const BipartiteState& state, const QForward& cache,
              const std::vector<double>& dq, QNetParams& grads);

/// Candidate with the highest q, ties to the lowest variable index.
/// Throws std::invalid_argument when candidates is empty.
int masked_argmax(const std::vector<double>& q, const std::vector<int>& candidates);

/// Per-transition regression targets y = r + γ·Qᵗ(s′, a*) with the action
/// a* chosen by the online network over the stored next-candidate set
/// (double estimation); y = r on terminals.
std::vector<double> compute_targets(const QNetParams& online, const QNetParams& target,
                                    const std::vector<Transition>& batch, double gamma);

/// Qˢ(s, a) of the stored action for each transition.
std::vector<double> superior_values(const QNetParams& superior,
                                    const std::vector<Transition>& batch);

/// Mean over the batch of (Q(s,a;θ) − targets[k])² + λs·(superior_q[k] −
/// Q(s,a;θ))², with targets and superior values held constant. The
/// finite-difference oracle in the tests re-evaluates exactly this.
double loss_value(const QNetParams& params, const std::vector<Transition>& batch,
                  const std::vector<double>& targets, const std::vector<double>& superior_q,
                  double lambda_s);

struct LossResult {
  double loss = 0.0;
  QNetParams grads;
  std::vector<double> targets;
  std::vector<double> superior_q;
};

/// Loss and d(loss)/dθ over the batch; targets come from (online, target)
/// and the superior term from `superior`, both treated as constants.
/// Throws std::invalid_argument on an empty batch, a stored action outside
/// its candidate mask, or a non-terminal transition without next
/// candidates.
LossResult loss_and_grads(const QNetParams& online, const QNetParams& target,
                          const QNetParams& superior, const std::vector<Transition>& batch,
                          double gamma, double lambda_s);

/// Adam with bias correction; moments laid out in param_tensors order.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long step = 0;
  std::vector<std::vector<double>> m, v;
};

AdamState make_adam(const QNetParams& params);
void adam_step(AdamState& opt, QNetParams& params, const QNetParams& grads, double lr);

/// Versioned native binary checkpoint, bit-exact round-trip. parse throws
/// std::runtime_error on bad magic, version, or shape.
std::string serialize_qnet(const QNetParams& params);
QNetParams parse_qnet(const std::string& bytes);
void save_qnet(const QNetParams& params, const std::string& path);
QNetParams load_qnet(const std::string& path);

}  // namespace qbranch
