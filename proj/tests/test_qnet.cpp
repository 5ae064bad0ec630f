/* SPDX-License-Identifier: Apache-2.0 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "qbranch/common.hpp"
#include "qbranch/featurize.hpp"
#include "qbranch/qnet.hpp"
#include "test_support.hpp"

using namespace qbranch;

namespace {

// Hand-buildable width-1 network whose every stage is a plain sum: each
// embedding reads one raw feature, every perceptron is sum -> relu -> copy.
// Scores are then small exact rational numbers we can follow by hand.
QNetParams toy_params(double edge_w) {
  QNetParams p;
  p.var_dim = kVarFeatDim;
  p.cons_dim = kConsFeatDim;
  p.edge_dim = kEdgeFeatDim;
  p.hidden = 1;
  auto lin = [](int in, std::vector<double> w) {
    Linear l;
    l.in = in;
    l.out = 1;
    l.w = std::move(w);
    l.b = {0.0};
    return l;
  };
  std::vector<double> ve(kVarFeatDim, 0.0);
  ve[0] = 1.0;  // embedding = first raw feature
  std::vector<double> ce(kConsFeatDim, 0.0);
  ce[0] = 1.0;
  p.var_embed = lin(kVarFeatDim, ve);
  p.cons_embed = lin(kConsFeatDim, ce);
  p.edge_embed = lin(kEdgeFeatDim, {edge_w});
  auto sum_mlp = [&](int in) {
    Mlp2 m;
    m.l1 = lin(in, std::vector<double>(in, 1.0));
    m.l2 = lin(1, {1.0});
    return m;
  };
  p.g_c = sum_mlp(3);
  p.f_c = sum_mlp(2);
  p.g_v = sum_mlp(3);
  p.f_v = sum_mlp(2);
  p.head = sum_mlp(1);
  return p;
}

// One constraint, two variables, both candidates. First raw features carry
// the toy payload; every other feature is zero.
BipartiteState toy_state() {
  BipartiteState s;
  s.n_cons = 1;
  s.n_vars = 2;
  s.cons_feats.push_back({1.0, 0.0, 0.0, 0.0});
  std::array<double, kVarFeatDim> v0{};
  v0[0] = 0.5;
  std::array<double, kVarFeatDim> v1{};
  v1[0] = -0.25;
  s.var_feats = {v0, v1};
  BipartiteState::Edge e0;
  e0.row = 0;
  e0.col = 0;
  e0.feat = {0.5};
  BipartiteState::Edge e1;
  e1.row = 0;
  e1.col = 1;
  e1.feat = {1.0};
  s.edges = {e0, e1};
  s.candidate_mask = {true, true};
  return s;
}

BipartiteState random_state(Rng& rng) {
  BipartiteState s;
  s.n_cons = 2 + static_cast<int>(rng.index(3));
  s.n_vars = 3 + static_cast<int>(rng.index(4));
  for (int i = 0; i < s.n_cons; ++i) {
    std::array<double, kConsFeatDim> f{};
    for (double& v : f) v = rng.uniform(-1.0, 1.0);
    s.cons_feats.push_back(f);
  }
  for (int j = 0; j < s.n_vars; ++j) {
    std::array<double, kVarFeatDim> f{};
    for (double& v : f) v = rng.uniform(-1.0, 1.0);
    s.var_feats.push_back(f);
  }
  for (int i = 0; i < s.n_cons; ++i)
    for (int j = 0; j < s.n_vars; ++j)
      if (rng.bernoulli(0.6)) {
        BipartiteState::Edge e;
        e.row = i;
        e.col = j;
        e.feat = {rng.uniform(-1.0, 1.0)};
        s.edges.push_back(e);
      }
  if (s.edges.empty()) {
    BipartiteState::Edge e;
    e.row = 0;
    e.col = 0;
    e.feat = {0.5};
    s.edges.push_back(e);
  }
  s.candidate_mask.assign(s.n_vars, false);
  for (int j = 0; j < s.n_vars; ++j) s.candidate_mask[j] = rng.bernoulli(0.5);
  if (std::find(s.candidate_mask.begin(), s.candidate_mask.end(), true) ==
      s.candidate_mask.end())
    s.candidate_mask[0] = true;
  return s;
}

std::vector<int> mask_indices(const BipartiteState& s) {
  std::vector<int> out;
  for (int j = 0; j < s.n_vars; ++j)
    if (s.candidate_mask[j]) out.push_back(j);
  return out;
}

Transition random_transition(Rng& rng, bool terminal) {
  Transition t;
  t.state = random_state(rng);
  const std::vector<int> cands = mask_indices(t.state);
  t.action = cands[rng.index(cands.size())];
  t.reward = rng.uniform(-2.0, 2.0);
  t.done = terminal;
  if (!terminal) {
    t.next_state = random_state(rng);
    t.next_candidates = mask_indices(*t.next_state);
  }
  return t;
}

}  // namespace

TEST_CASE("initialization is seeded, bounded, and bias-free") {
  const QNetParams a = init_qnet(kVarFeatDim, kConsFeatDim, kEdgeFeatDim, 16, 42);
  const QNetParams b = init_qnet(kVarFeatDim, kConsFeatDim, kEdgeFeatDim, 16, 42);
  const QNetParams c = init_qnet(kVarFeatDim, kConsFeatDim, kEdgeFeatDim, 16, 43);
  CHECK(a == b);
  CHECK(a != c);

  auto check_linear = [](const Linear& l) {
    const double bound = std::sqrt(1.0 / static_cast<double>(l.in));
    for (double w : l.w) {
      CHECK(std::abs(w) <= bound);
    }
    for (double bias : l.b) CHECK(bias == 0.0);
  };
  check_linear(a.var_embed);
  check_linear(a.cons_embed);
  check_linear(a.edge_embed);
  for (const Mlp2* m : {&a.g_c, &a.f_c, &a.g_v, &a.f_v, &a.head}) {
    check_linear(m->l1);
    check_linear(m->l2);
  }
  // Weights actually vary rather than collapsing to a constant.
  const auto [lo, hi] = std::minmax_element(a.g_c.l1.w.begin(), a.g_c.l1.w.end());
  CHECK(*lo < *hi);
}

TEST_CASE("parameter count formula matches the allocated tensors") {
  for (int h : {1, 8, 64}) {
    QNetParams p = init_qnet(kVarFeatDim, kConsFeatDim, kEdgeFeatDim, h, 7);
    long long actual = 0;
    for (const std::vector<double>* t : param_tensors(std::as_const(p)))
      actual += static_cast<long long>(t->size());
    CHECK(param_count(kVarFeatDim, kConsFeatDim, kEdgeFeatDim, h) == actual);
    CHECK(param_count(p) == actual);
    // 26 tensors: weights and biases of 3 embeddings plus 5 two-layer
    // perceptrons.
    CHECK(param_tensors(p).size() == 26);
  }
}

TEST_CASE("forward on the toy network reproduces the hand-computed trace") {
  const BipartiteState s = toy_state();

  // edge_w = +2: messages 2.5 and 2.75 -> c1 = 6.25 -> scores 8.25, 7.75.
  const QForward plus = forward(toy_params(2.0), s);
  REQUIRE(plus.q.size() == 2);
  CHECK(plus.q[0] == 8.25);
  CHECK(plus.q[1] == 7.75);

  // edge_w = -2 drives three perceptron inputs negative, exercising the
  // relu clamps: q = {1.5, 0}.
  const QForward minus = forward(toy_params(-2.0), s);
  CHECK(minus.q[0] == 1.5);
  CHECK(minus.q[1] == 0.0);
}

TEST_CASE("nodes with no incident edges aggregate an all-zero message sum") {
  BipartiteState s;
  s.n_cons = 1;
  s.n_vars = 1;
  s.cons_feats.push_back({1.0, 0.0, 0.0, 0.0});
  std::array<double, kVarFeatDim> v0{};
  v0[0] = 0.5;
  s.var_feats = {v0};
  s.candidate_mask = {true};
  // No edges at all: c1 = relu(c0 + 0), v1 = relu(v0 + 0), q = relu(v1).
  const QForward f = forward(toy_params(3.0), s);
  CHECK(f.q[0] == 0.5);
  CHECK(f.cons_sum[0][0] == 0.0);
  CHECK(f.var_sum[0][0] == 0.0);
}

TEST_CASE("forward rejects networks shaped for other feature dimensions") {
  const QNetParams p = init_qnet(kVarFeatDim + 1, kConsFeatDim, kEdgeFeatDim, 4, 3);
  CHECK_THROWS_AS(forward(p, toy_state()), std::invalid_argument);
}

TEST_CASE("scores are equivariant under node permutations") {
  Rng rng(314);
  for (int trial = 0; trial < 20; ++trial) {
    const BipartiteState s = random_state(rng);
    const QNetParams p = init_qnet(kVarFeatDim, kConsFeatDim, kEdgeFeatDim, 8, 100 + trial);
    const QForward base = forward(p, s);

    std::vector<int> pv(s.n_vars), pc(s.n_cons);
    std::iota(pv.begin(), pv.end(), 0);
    std::iota(pc.begin(), pc.end(), 0);
    for (int j = s.n_vars - 1; j > 0; --j)
      std::swap(pv[j], pv[rng.index(static_cast<std::size_t>(j) + 1)]);
    for (int i = s.n_cons - 1; i > 0; --i)
      std::swap(pc[i], pc[rng.index(static_cast<std::size_t>(i) + 1)]);

    BipartiteState perm;
    perm.n_cons = s.n_cons;
    perm.n_vars = s.n_vars;
    perm.cons_feats.resize(s.n_cons);
    perm.var_feats.resize(s.n_vars);
    perm.candidate_mask.assign(s.n_vars, false);
    for (int i = 0; i < s.n_cons; ++i) perm.cons_feats[pc[i]] = s.cons_feats[i];
    for (int j = 0; j < s.n_vars; ++j) {
      perm.var_feats[pv[j]] = s.var_feats[j];
      perm.candidate_mask[pv[j]] = s.candidate_mask[j];
    }
    // Edge list order is preserved, so each node aggregates its messages in
    // the same order and the scores must match bit for bit.
    for (const auto& e : s.edges) {
      BipartiteState::Edge pe;
      pe.row = pc[e.row];
      pe.col = pv[e.col];
      pe.feat = e.feat;
      perm.edges.push_back(pe);
    }

    const QForward moved = forward(p, perm);
    for (int j = 0; j < s.n_vars; ++j) CHECK(moved.q[pv[j]] == base.q[j]);
  }
}

TEST_CASE("masked argmax picks the best candidate, ties to the lowest index") {
  CHECK(masked_argmax({1.0, 5.0, 3.0}, {0, 1, 2}) == 1);
  CHECK(masked_argmax({1.0, 5.0, 3.0}, {0, 2}) == 2);  // best unmasked
  CHECK(masked_argmax({2.0, 2.0, 2.0}, {1, 2}) == 1);  // tie -> lowest
  CHECK(masked_argmax({-1.0, -2.0}, {0, 1}) == 0);
  CHECK_THROWS_AS(masked_argmax({1.0}, {}), std::invalid_argument);
  CHECK_THROWS_AS(masked_argmax({1.0}, {3}), std::invalid_argument);
}

TEST_CASE("targets use the online argmax but the target network's value") {
  // Online toy scores {8.25, 7.75} on the next state (argmax var 0); the
  // sign-flipped target scores {5.75, 8.25}, so the double estimate reads
  // the target at var 0, not its own maximum.
  QNetParams online = toy_params(2.0);
  QNetParams target = toy_params(2.0);
  target.var_embed.w[0] = -1.0;

  Transition t;
  t.state = toy_state();
  t.action = 0;
  t.reward = 1.0;
  t.done = false;
  t.next_state = toy_state();
  t.next_candidates = {0, 1};

  const std::vector<double> y = compute_targets(online, target, {t}, 0.99);
  REQUIRE(y.size() == 1);
  CHECK(y[0] == 1.0 + 0.99 * 5.75);
  CHECK(y[0] != 1.0 + 0.99 * 8.25);  // a naive max would land here

  // Terminals regress on the reward alone.
  Transition done = t;
  done.done = true;
  done.next_state.reset();
  done.next_candidates.clear();
  done.reward = -3.5;
  CHECK(compute_targets(online, target, {done}, 0.99)[0] == -3.5);
}

TEST_CASE("loss value on the toy network is exact arithmetic") {
  Transition t;
  t.state = toy_state();
  t.action = 0;  // Q(s, 0) = 8.25
  t.reward = 0.0;
  t.done = true;
  const QNetParams p = toy_params(2.0);
  CHECK(superior_values(p, {t}) == std::vector<double>{8.25});
  // (8.25 - 2.25)^2 + 0.5 * (1.25 - 8.25)^2 = 36 + 24.5
  CHECK(loss_value(p, {t}, {2.25}, {1.25}, 0.5) == 60.5);
  CHECK(loss_value(p, {t}, {2.25}, {0.0}, 0.0) == 36.0);
}

TEST_CASE("loss rejects malformed transitions and empty batches") {
  const QNetParams p = toy_params(2.0);
  Transition bad_action;
  bad_action.state = toy_state();
  bad_action.state.candidate_mask = {true, false};
  bad_action.action = 1;  // masked out
  bad_action.done = true;
  CHECK_THROWS_AS(loss_and_grads(p, p, p, {bad_action}, 0.99, 0.0), std::invalid_argument);

  Transition no_next;
  no_next.state = toy_state();
  no_next.action = 0;
  no_next.done = false;  // non-terminal but nothing to bootstrap from
  CHECK_THROWS_AS(loss_and_grads(p, p, p, {no_next}, 0.99, 0.0), std::invalid_argument);

  CHECK_THROWS_AS(loss_and_grads(p, p, p, {}, 0.99, 0.0), std::invalid_argument);
}

TEST_CASE("analytic gradients match central finite differences") {
  const double fd_h = 1e-5;
  double worst = 0.0;
  long long coords = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(900 + seed);
    std::vector<Transition> batch;
    batch.push_back(random_transition(rng, false));
    batch.push_back(random_transition(rng, false));
    batch.push_back(random_transition(rng, true));

    const QNetParams online = init_qnet(kVarFeatDim, kConsFeatDim, kEdgeFeatDim, 8, 7000 + seed);
    const QNetParams target = init_qnet(kVarFeatDim, kConsFeatDim, kEdgeFeatDim, 8, 8000 + seed);
    const QNetParams superior =
        init_qnet(kVarFeatDim, kConsFeatDim, kEdgeFeatDim, 8, 9000 + seed);
    const double lambda = seed % 2 == 0 ? 0.5 : 0.0;

    const LossResult res = loss_and_grads(online, target, superior, batch, 0.99, lambda);
    // The reported loss is the same quantity the perturbation oracle reads.
    CHECK(res.loss == loss_value(online, batch, res.targets, res.superior_q, lambda));

    QNetParams grads = res.grads;
    const auto grad_tensors = param_tensors(grads);
    QNetParams probe = online;
    const auto probe_tensors = param_tensors(probe);
    REQUIRE(grad_tensors.size() == probe_tensors.size());
    for (std::size_t k = 0; k < probe_tensors.size(); ++k) {
      for (std::size_t i = 0; i < probe_tensors[k]->size(); ++i) {
        const double keep = (*probe_tensors[k])[i];
        (*probe_tensors[k])[i] = keep + fd_h;
        const double up = loss_value(probe, batch, res.targets, res.superior_q, lambda);
        (*probe_tensors[k])[i] = keep - fd_h;
        const double dn = loss_value(probe, batch, res.targets, res.superior_q, lambda);
        (*probe_tensors[k])[i] = keep;
        const double fd = (up - dn) / (2.0 * fd_h);
        const double an = (*grad_tensors[k])[i];
        worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(fd) + std::abs(an)));
        ++coords;
      }
    }
  }
  CHECK(coords >= 20000);  // every coordinate of every seed was probed
  CHECK(worst < 1e-4);
  MESSAGE("finite-difference worst relative error: ", worst, " over ", coords, " coordinates");
}

TEST_CASE("a superior network equal to the online one adds exactly nothing") {
  Rng rng(55);
  std::vector<Transition> batch;
  batch.push_back(random_transition(rng, false));
  batch.push_back(random_transition(rng, true));
  const QNetParams online = init_qnet(kVarFeatDim, kConsFeatDim, kEdgeFeatDim, 8, 1);
  const QNetParams target = init_qnet(kVarFeatDim, kConsFeatDim, kEdgeFeatDim, 8, 2);
  const QNetParams other = init_qnet(kVarFeatDim, kConsFeatDim, kEdgeFeatDim, 8, 3);

  const LossResult self_sup = loss_and_grads(online, target, online, batch, 0.99, 0.7);
  const LossResult plain = loss_and_grads(online, target, other, batch, 0.99, 0.0);
  CHECK(self_sup.loss == plain.loss);
  CHECK(self_sup.grads == plain.grads);
  for (double qs : self_sup.superior_q) CHECK(std::isfinite(qs));
}

TEST_CASE("adam follows the expected first step and leaves zero-gradient weights alone") {
  QNetParams p = toy_params(2.0);
  const QNetParams before = p;
  AdamState opt = make_adam(p);
  QNetParams zero = zeros_like(p);
  adam_step(opt, p, zero, 0.1);
  CHECK(p == before);  // no gradient, no motion
  CHECK(opt.step == 1);

  // One nonzero coordinate: the first bias of f_v. From a fresh optimizer
  // the bias-corrected first update is lr * g / (|g| + eps).
  AdamState fresh = make_adam(p);
  QNetParams grads = zeros_like(p);
  grads.f_v.l1.b[0] = -2.0;
  adam_step(fresh, p, grads, 0.1);
  const double g = -2.0;
  const double expect = before.f_v.l1.b[0] - 0.1 * g / (std::sqrt(g * g) + 1e-8);
  CHECK(p.f_v.l1.b[0] == doctest::Approx(expect).epsilon(1e-12));
  // Everything untouched by the gradient stays put.
  CHECK(p.head == before.head);
  CHECK(p.var_embed == before.var_embed);
}

TEST_CASE("adam minimizes a scalar quadratic through the tensor interface") {
  QNetParams p = toy_params(2.0);
  AdamState opt = make_adam(p);
  for (int it = 0; it < 800; ++it) {
    QNetParams grads = zeros_like(p);
    grads.head.l2.w[0] = 2.0 * (p.head.l2.w[0] - 3.0);
    adam_step(opt, p, grads, 0.1);
  }
  CHECK(p.head.l2.w[0] == doctest::Approx(3.0).epsilon(0.02));
}

TEST_CASE("checkpoints round-trip bit for bit and reject malformed bytes") {
  const QNetParams p = init_qnet(kVarFeatDim, kConsFeatDim, kEdgeFeatDim, 16, 1234);
  const std::string bytes = serialize_qnet(p);
  const QNetParams back = parse_qnet(bytes);
  CHECK(back == p);

  const std::string path = "qnet_roundtrip.bin";
  save_qnet(p, path);
  const QNetParams loaded = load_qnet(path);
  CHECK(loaded == p);
  std::remove(path.c_str());

  std::string bad_magic = bytes;
  bad_magic[0] = static_cast<char>(bad_magic[0] ^ 0x5a);
  CHECK_THROWS_AS(parse_qnet(bad_magic), std::runtime_error);

  std::string bad_version = bytes;
  bad_version[4] = static_cast<char>(99);
  CHECK_THROWS_AS(parse_qnet(bad_version), std::runtime_error);

  CHECK_THROWS_AS(parse_qnet(bytes.substr(0, bytes.size() / 2)), std::runtime_error);
  CHECK_THROWS_AS(parse_qnet(bytes + "x"), std::runtime_error);
  CHECK_THROWS_AS(parse_qnet(std::string()), std::runtime_error);
  CHECK_THROWS_AS(load_qnet("no_such_file.bin"), std::runtime_error);
}

TEST_CASE("gradient steps reduce the training loss on a fixed batch") {
  Rng rng(77);
  std::vector<Transition> batch;
  for (int k = 0; k < 4; ++k) batch.push_back(random_transition(rng, k == 3));
  QNetParams online = init_qnet(kVarFeatDim, kConsFeatDim, kEdgeFeatDim, 8, 10);
  const QNetParams target = init_qnet(kVarFeatDim, kConsFeatDim, kEdgeFeatDim, 8, 11);
  const QNetParams superior = init_qnet(kVarFeatDim, kConsFeatDim, kEdgeFeatDim, 8, 12);
  AdamState opt = make_adam(online);

  const LossResult first = loss_and_grads(online, target, superior, batch, 0.99, 0.5);
  double loss = first.loss;
  adam_step(opt, online, first.grads, 0.003);
  for (int it = 0; it < 120; ++it) {
    const LossResult step = loss_and_grads(online, target, superior, batch, 0.99, 0.5);
    loss = step.loss;
    adam_step(opt, online, step.grads, 0.003);
  }
  // Fixed targets, fixed batch: optimization should make clear progress.
  CHECK(loss < 0.5 * first.loss);
}
