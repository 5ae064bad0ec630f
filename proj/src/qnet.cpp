/* SPDX-License-Identifier: Apache-2.0 */

#include "qbranch/qnet.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "binary_io.hpp"

namespace qbranch {

namespace {

Linear make_linear(int in, int out) {
  Linear l;
  l.in = in;
  l.out = out;
  l.w.assign(static_cast<std::size_t>(in) * out, 0.0);
  l.b.assign(out, 0.0);
  return l;
}

QNetParams make_shaped(int var_dim, int cons_dim, int edge_dim, int hidden) {
  if (var_dim < 1 || cons_dim < 1 || edge_dim < 1 || hidden < 1)
    throw std::invalid_argument("qnet: dimensions must be positive");
  QNetParams p;
  p.var_dim = var_dim;
  p.cons_dim = cons_dim;
  p.edge_dim = edge_dim;
  p.hidden = hidden;
  p.var_embed = make_linear(var_dim, hidden);
  p.cons_embed = make_linear(cons_dim, hidden);
  p.edge_embed = make_linear(edge_dim, hidden);
  p.g_c = {make_linear(3 * hidden, hidden), make_linear(hidden, hidden)};
  p.f_c = {make_linear(2 * hidden, hidden), make_linear(hidden, hidden)};
  p.g_v = {make_linear(3 * hidden, hidden), make_linear(hidden, hidden)};
  p.f_v = {make_linear(2 * hidden, hidden), make_linear(hidden, hidden)};
  p.head = {make_linear(hidden, hidden), make_linear(hidden, 1)};
  return p;
}

void linear_forward(const Linear& l, const double* x, double* y) {
  for (int o = 0; o < l.out; ++o) {
    double acc = l.b[o];
    const double* row = l.w.data() + static_cast<std::size_t>(o) * l.in;
    for (int i = 0; i < l.in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

/// dx may be null when the input needs no gradient (raw features).
void linear_backward(const Linear& l, const double* x, const double* dy, Linear& grad,
                     double* dx) {
  for (int o = 0; o < l.out; ++o) {
    const double g = dy[o];
    if (g == 0.0) continue;
    grad.b[o] += g;
    const double* row = l.w.data() + static_cast<std::size_t>(o) * l.in;
    double* grow = grad.w.data() + static_cast<std::size_t>(o) * l.in;
    for (int i = 0; i < l.in; ++i) {
      grow[i] += g * x[i];
      if (dx) dx[i] += g * row[i];
    }
  }
}

void mlp2_forward(const Mlp2& m, const double* x, std::vector<double>& pre,
                  std::vector<double>& hid, std::vector<double>& out) {
  pre.resize(m.l1.out);
  hid.resize(m.l1.out);
  out.resize(m.l2.out);
  linear_forward(m.l1, x, pre.data());
  for (int i = 0; i < m.l1.out; ++i) hid[i] = pre[i] > 0.0 ? pre[i] : 0.0;
  linear_forward(m.l2, hid.data(), out.data());
}

void mlp2_backward(const Mlp2& m, const double* x, const std::vector<double>& pre,
                   const std::vector<double>& hid, const double* dout, Mlp2& grad, double* dx) {
  std::vector<double> dhid(m.l1.out, 0.0);
  linear_backward(m.l2, hid.data(), dout, grad.l2, dhid.data());
  for (int i = 0; i < m.l1.out; ++i)
    if (pre[i] <= 0.0) dhid[i] = 0.0;
  linear_backward(m.l1, x, dhid.data(), grad.l1, dx);
}

bool all_zero(const std::vector<double>& v) {
  for (double x : v)
    if (x != 0.0) return false;
  return true;
}

void concat2(const std::vector<double>& a, const std::vector<double>& b,
             std::vector<double>& out) {
  out.clear();
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
}

void concat3(const std::vector<double>& a, const std::vector<double>& b,
             const std::vector<double>& c, std::vector<double>& out) {
  out.clear();
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  out.insert(out.end(), c.begin(), c.end());
}

void fill_weights(Linear& l, Rng& rng) {
  const double s = std::sqrt(1.0 / l.in);
  for (double& w : l.w) w = rng.uniform(-s, s);
}

}  // namespace

QNetParams init_qnet(int var_dim, int cons_dim, int edge_dim, int hidden, std::uint64_t seed) {
  QNetParams p = make_shaped(var_dim, cons_dim, edge_dim, hidden);
  Rng rng(seed);
  fill_weights(p.var_embed, rng);
  fill_weights(p.cons_embed, rng);
  fill_weights(p.edge_embed, rng);
  for (Mlp2* m : {&p.g_c, &p.f_c, &p.g_v, &p.f_v, &p.head}) {
    fill_weights(m->l1, rng);
    fill_weights(m->l2, rng);
  }
  return p;
}

long long param_count(int var_dim, int cons_dim, int edge_dim, int hidden) {
  const long long h = hidden;
  const long long embeds = (var_dim + 1) * h + (cons_dim + 1) * h + (edge_dim + 1) * h;
  const long long msg = (3 * h + 1) * h + (h + 1) * h;   // g_c and g_v each
  const long long upd = (2 * h + 1) * h + (h + 1) * h;   // f_c and f_v each
  const long long head = (h + 1) * h + (h + 1);
  return embeds + 2 * msg + 2 * upd + head;
}

long long param_count(const QNetParams& params) {
  long long n = 0;
  for (const auto* t : param_tensors(params)) n += static_cast<long long>(t->size());
  return n;
}

std::vector<std::vector<double>*> param_tensors(QNetParams& p) {
  std::vector<std::vector<double>*> out;
  for (Linear* l : {&p.var_embed, &p.cons_embed, &p.edge_embed}) {
    out.push_back(&l->w);
    out.push_back(&l->b);
  }
  for (Mlp2* m : {&p.g_c, &p.f_c, &p.g_v, &p.f_v, &p.head})
    for (Linear* l : {&m->l1, &m->l2}) {
      out.push_back(&l->w);
      out.push_back(&l->b);
    }
  return out;
}

std::vector<const std::vector<double>*> param_tensors(const QNetParams& p) {
  std::vector<const std::vector<double>*> out;
  for (auto* t : param_tensors(const_cast<QNetParams&>(p))) out.push_back(t);
  return out;
}

QNetParams zeros_like(const QNetParams& params) {
  return make_shaped(params.var_dim, params.cons_dim, params.edge_dim, params.hidden);
}

QForward forward(const QNetParams& p, const BipartiteState& state) {
  if (p.var_dim != kVarFeatDim || p.cons_dim != kConsFeatDim || p.edge_dim != kEdgeFeatDim)
    throw std::invalid_argument("forward: network shaped for different feature dimensions");
  const std::size_t n_vars = state.var_feats.size();
  const std::size_t n_cons = state.cons_feats.size();
  const std::size_t n_edges = state.edges.size();
  const int h = p.hidden;

  QForward f;
  f.v0.resize(n_vars);
  for (std::size_t j = 0; j < n_vars; ++j) {
    f.v0[j].resize(h);
    linear_forward(p.var_embed, state.var_feats[j].data(), f.v0[j].data());
  }
  f.c0.resize(n_cons);
  for (std::size_t i = 0; i < n_cons; ++i) {
    f.c0[i].resize(h);
    linear_forward(p.cons_embed, state.cons_feats[i].data(), f.c0[i].data());
  }
  f.e0.resize(n_edges);
  for (std::size_t k = 0; k < n_edges; ++k) {
    f.e0[k].resize(h);
    linear_forward(p.edge_embed, state.edges[k].feat.data(), f.e0[k].data());
  }

  // Constraint-side pass; absent edges leave the sum at zero.
  f.gc_pre.resize(n_edges);
  f.gc_hid.resize(n_edges);
  f.gc_out.resize(n_edges);
  f.cons_sum.assign(n_cons, std::vector<double>(h, 0.0));
  std::vector<double> cat;
  for (std::size_t k = 0; k < n_edges; ++k) {
    const auto& e = state.edges[k];
    concat3(f.c0[e.row], f.v0[e.col], f.e0[k], cat);
    mlp2_forward(p.g_c, cat.data(), f.gc_pre[k], f.gc_hid[k], f.gc_out[k]);
    for (int d = 0; d < h; ++d) f.cons_sum[e.row][d] += f.gc_out[k][d];
  }
  f.fc_pre.resize(n_cons);
  f.fc_hid.resize(n_cons);
  f.c1.resize(n_cons);
  for (std::size_t i = 0; i < n_cons; ++i) {
    concat2(f.c0[i], f.cons_sum[i], cat);
    mlp2_forward(p.f_c, cat.data(), f.fc_pre[i], f.fc_hid[i], f.c1[i]);
  }

  // Variable-side pass over the refreshed constraint embeddings.
  f.gv_pre.resize(n_edges);
  f.gv_hid.resize(n_edges);
  f.gv_out.resize(n_edges);
  f.var_sum.assign(n_vars, std::vector<double>(h, 0.0));
  for (std::size_t k = 0; k < n_edges; ++k) {
    const auto& e = state.edges[k];
    concat3(f.c1[e.row], f.v0[e.col], f.e0[k], cat);
    mlp2_forward(p.g_v, cat.data(), f.gv_pre[k], f.gv_hid[k], f.gv_out[k]);
    for (int d = 0; d < h; ++d) f.var_sum[e.col][d] += f.gv_out[k][d];
  }
  f.fv_pre.resize(n_vars);
  f.fv_hid.resize(n_vars);
  f.v1.resize(n_vars);
  f.head_pre.resize(n_vars);
  f.head_hid.resize(n_vars);
  f.q.resize(n_vars);
  std::vector<double> q1;
  for (std::size_t j = 0; j < n_vars; ++j) {
    concat2(f.v0[j], f.var_sum[j], cat);
    mlp2_forward(p.f_v, cat.data(), f.fv_pre[j], f.fv_hid[j], f.v1[j]);
    mlp2_forward(p.head, f.v1[j].data(), f.head_pre[j], f.head_hid[j], q1);
    f.q[j] = q1[0];
  }
  return f;
}

void backward(const QNetParams& p, const BipartiteState& state, const QForward& f,
              const std::vector<double>& dq, QNetParams& grads) {
  const std::size_t n_vars = state.var_feats.size();
  const std::size_t n_cons = state.cons_feats.size();
  const std::size_t n_edges = state.edges.size();
  const int h = p.hidden;
  if (dq.size() != n_vars) throw std::invalid_argument("backward: dq size mismatch");

  std::vector<std::vector<double>> dv0(n_vars, std::vector<double>(h, 0.0));
  std::vector<std::vector<double>> dc0(n_cons, std::vector<double>(h, 0.0));
  std::vector<std::vector<double>> de0(n_edges, std::vector<double>(h, 0.0));
  std::vector<std::vector<double>> dc1(n_cons, std::vector<double>(h, 0.0));
  std::vector<std::vector<double>> dvar_sum(n_vars, std::vector<double>(h, 0.0));
  std::vector<std::vector<double>> dcons_sum(n_cons, std::vector<double>(h, 0.0));

  // Head and variable update, only where the loss actually looks.
  std::vector<double> cat, dcat, dv1(h);
  for (std::size_t j = 0; j < n_vars; ++j) {
    if (dq[j] == 0.0) continue;
    const double dout = dq[j];
    std::fill(dv1.begin(), dv1.end(), 0.0);
    mlp2_backward(p.head, f.v1[j].data(), f.head_pre[j], f.head_hid[j], &dout, grads.head,
                  dv1.data());
    concat2(f.v0[j], f.var_sum[j], cat);
    dcat.assign(2 * h, 0.0);
    mlp2_backward(p.f_v, cat.data(), f.fv_pre[j], f.fv_hid[j], dv1.data(), grads.f_v,
                  dcat.data());
    for (int d = 0; d < h; ++d) {
      dv0[j][d] += dcat[d];
      dvar_sum[j][d] += dcat[h + d];
    }
  }

  for (std::size_t k = 0; k < n_edges; ++k) {
    const auto& e = state.edges[k];
    if (all_zero(dvar_sum[e.col])) continue;
    concat3(f.c1[e.row], f.v0[e.col], f.e0[k], cat);
    dcat.assign(3 * h, 0.0);
    mlp2_backward(p.g_v, cat.data(), f.gv_pre[k], f.gv_hid[k], dvar_sum[e.col].data(), grads.g_v,
                  dcat.data());
    for (int d = 0; d < h; ++d) {
      dc1[e.row][d] += dcat[d];
      dv0[e.col][d] += dcat[h + d];
      de0[k][d] += dcat[2 * h + d];
    }
  }

  for (std::size_t i = 0; i < n_cons; ++i) {
    if (all_zero(dc1[i])) continue;
    concat2(f.c0[i], f.cons_sum[i], cat);
    dcat.assign(2 * h, 0.0);
    mlp2_backward(p.f_c, cat.data(), f.fc_pre[i], f.fc_hid[i], dc1[i].data(), grads.f_c,
                  dcat.data());
    for (int d = 0; d < h; ++d) {
      dc0[i][d] += dcat[d];
      dcons_sum[i][d] += dcat[h + d];
    }
  }

  for (std::size_t k = 0; k < n_edges; ++k) {
    const auto& e = state.edges[k];
    if (all_zero(dcons_sum[e.row])) continue;
    concat3(f.c0[e.row], f.v0[e.col], f.e0[k], cat);
    dcat.assign(3 * h, 0.0);
    mlp2_backward(p.g_c, cat.data(), f.gc_pre[k], f.gc_hid[k], dcons_sum[e.row].data(),
                  grads.g_c, dcat.data());
    for (int d = 0; d < h; ++d) {
      dc0[e.row][d] += dcat[d];
      dv0[e.col][d] += dcat[h + d];
      de0[k][d] += dcat[2 * h + d];
    }
  }

  for (std::size_t j = 0; j < n_vars; ++j)
    if (!all_zero(dv0[j]))
      linear_backward(p.var_embed, state.var_feats[j].data(), dv0[j].data(), grads.var_embed,
                      nullptr);
  for (std::size_t i = 0; i < n_cons; ++i)
    if (!all_zero(dc0[i]))
      linear_backward(p.cons_embed, state.cons_feats[i].data(), dc0[i].data(), grads.cons_embed,
                      nullptr);
  for (std::size_t k = 0; k < n_edges; ++k)
    if (!all_zero(de0[k]))
      linear_backward(p.edge_embed, state.edges[k].feat.data(), de0[k].data(), grads.edge_embed,
                      nullptr);
}

int masked_argmax(const std::vector<double>& q, const std::vector<int>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("masked_argmax: no candidates");
  int best = -1;
  double best_q = 0.0;
  for (int c : candidates) {
    if (c < 0 || static_cast<std::size_t>(c) >= q.size())
      throw std::invalid_argument("masked_argmax: candidate out of range");
    if (best < 0 || q[c] > best_q) {
      best = c;
      best_q = q[c];
    }
  }
  return best;
}

namespace {

void check_transition(const Transition& t) {
  const std::size_t n_vars = t.state.var_feats.size();
  if (t.action < 0 || static_cast<std::size_t>(t.action) >= n_vars ||
      !t.state.candidate_mask[t.action])
    throw std::invalid_argument("loss: stored action outside its candidate set");
  if (!t.done && (!t.next_state.has_value() || t.next_candidates.empty()))
    throw std::invalid_argument("loss: non-terminal transition without next candidates");
}

}  // namespace

std::vector<double> compute_targets(const QNetParams& online, const QNetParams& target,
                                    const std::vector<Transition>& batch, double gamma) {
  std::vector<double> y;
  y.reserve(batch.size());
  for (const Transition& t : batch) {
    check_transition(t);
    if (t.done) {
      y.push_back(t.reward);
      continue;
    }
    const QForward on = forward(online, *t.next_state);
    const int pick = masked_argmax(on.q, t.next_candidates);
    const QForward tg = forward(target, *t.next_state);
    y.push_back(t.reward + gamma * tg.q[pick]);
  }
  return y;
}

std::vector<double> superior_values(const QNetParams& superior,
                                    const std::vector<Transition>& batch) {
  std::vector<double> qs;
  qs.reserve(batch.size());
  for (const Transition& t : batch) {
    check_transition(t);
    qs.push_back(forward(superior, t.state).q[t.action]);
  }
  return qs;
}

double loss_value(const QNetParams& params, const std::vector<Transition>& batch,
                  const std::vector<double>& targets, const std::vector<double>& superior_q,
                  double lambda_s) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  if (targets.size() != batch.size() || superior_q.size() != batch.size())
    throw std::invalid_argument("loss: target vectors must match the batch");
  StableSum total;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const double q = forward(params, batch[k].state).q[batch[k].action];
    const double td = q - targets[k];
    const double sup = superior_q[k] - q;
    total.add(td * td + lambda_s * sup * sup);
  }
  return total.value() / static_cast<double>(batch.size());
}

LossResult loss_and_grads(const QNetParams& online, const QNetParams& target,
                          const QNetParams& superior, const std::vector<Transition>& batch,
                          double gamma, double lambda_s) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  LossResult res;
  res.targets = compute_targets(online, target, batch, gamma);
  res.superior_q.assign(batch.size(), 0.0);
  if (lambda_s != 0.0) res.superior_q = superior_values(superior, batch);
  res.grads = zeros_like(online);

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  StableSum total;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const Transition& t = batch[k];
    const QForward f = forward(online, t.state);
    const double q = f.q[t.action];
    const double td = q - res.targets[k];
    const double sup = res.superior_q[k] - q;
    total.add(td * td + lambda_s * sup * sup);
    std::vector<double> dq(f.q.size(), 0.0);
    dq[t.action] = (2.0 * td + 2.0 * lambda_s * (q - res.superior_q[k])) * inv_n;
    backward(online, t.state, f, dq, res.grads);
  }
  res.loss = total.value() / static_cast<double>(batch.size());
  return res;
}

AdamState make_adam(const QNetParams& params) {
  AdamState opt;
  for (const auto* t : param_tensors(params)) {
    opt.m.emplace_back(t->size(), 0.0);
    opt.v.emplace_back(t->size(), 0.0);
  }
  return opt;
}

void adam_step(AdamState& opt, QNetParams& params, const QNetParams& grads, double lr) {
  const auto ps = param_tensors(params);
  const auto gs = param_tensors(grads);
  if (ps.size() != gs.size() || ps.size() != opt.m.size())
    throw std::invalid_argument("adam_step: mismatched shapes");
  ++opt.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t t = 0; t < ps.size(); ++t) {
    auto& p = *ps[t];
    const auto& g = *gs[t];
    if (p.size() != g.size()) throw std::invalid_argument("adam_step: mismatched tensor");
    auto& m = opt.m[t];
    auto& v = opt.v[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
}

namespace {
constexpr std::uint32_t kQnetMagic = 0x4e514251u;  // "QBQN" little-endian
constexpr std::uint32_t kQnetVersion = 1;
constexpr std::uint64_t kMaxTensor = 1ull << 32;
}  // namespace

std::string serialize_qnet(const QNetParams& params) {
  detail::ByteWriter w;
  w.u32(kQnetMagic);
  w.u32(kQnetVersion);
  w.u32(static_cast<std::uint32_t>(params.var_dim));
  w.u32(static_cast<std::uint32_t>(params.cons_dim));
  w.u32(static_cast<std::uint32_t>(params.edge_dim));
  w.u32(static_cast<std::uint32_t>(params.hidden));
  for (const auto* t : param_tensors(params)) w.f64s(*t);
  return std::move(w.out);
}

QNetParams parse_qnet(const std::string& bytes) {
  detail::ByteReader r(bytes);
  if (r.u32() != kQnetMagic) throw std::runtime_error("checkpoint: bad magic");
  if (r.u32() != kQnetVersion) throw std::runtime_error("checkpoint: unsupported version");
  const int dv = static_cast<int>(r.u32());
  const int dc = static_cast<int>(r.u32());
  const int de = static_cast<int>(r.u32());
  const int h = static_cast<int>(r.u32());
  if (dv < 1 || dc < 1 || de < 1 || h < 1 || h > (1 << 20))
    throw std::runtime_error("checkpoint: implausible shape");
  QNetParams p = make_shaped(dv, dc, de, h);
  for (auto* t : param_tensors(p)) {
    std::vector<double> data = r.f64s(kMaxTensor);
    if (data.size() != t->size()) throw std::runtime_error("checkpoint: tensor shape mismatch");
    *t = std::move(data);
  }
  r.expect_end();
  return p;
}

void save_qnet(const QNetParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  const std::string bytes = serialize_qnet(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

QNetParams load_qnet(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_qnet(bytes);
}

}  // namespace qbranch
