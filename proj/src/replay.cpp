/* SPDX-License-Identifier: Apache-2.0 */

#include "qbranch/replay.hpp"

#include <fstream>
#include <iterator>
#include <stdexcept>

#include "binary_io.hpp"

namespace qbranch {

ReplayBuffer::ReplayBuffer(std::vector<Transition> demo, std::size_t capacity_self)
    : demo_(std::move(demo)), capacity_self_(capacity_self) {
  ring_.reserve(capacity_self);
}

void ReplayBuffer::flush_episode(std::vector<Transition>& temp, bool admit) {
  if (admit && capacity_self_ > 0) {
    for (Transition& t : temp) {
      if (ring_.size() < capacity_self_) {
        ring_.push_back(std::move(t));
      } else {
        ring_[cursor_] = std::move(t);
        cursor_ = (cursor_ + 1) % capacity_self_;
      }
    }
  }
  temp.clear();
}

std::vector<Transition> ReplayBuffer::sample(int batch_size, Rng& rng) const {
  if (batch_size < 1) throw std::invalid_argument("sample: batch_size must be positive");
  if (size() == 0) throw std::invalid_argument("sample: empty buffer");
  std::vector<Transition> out;
  out.reserve(batch_size);
  for (int k = 0; k < batch_size; ++k) out.push_back(at(rng.index(size())));
  return out;
}

const Transition& ReplayBuffer::at(std::size_t k) const {
  if (k < demo_.size()) return demo_[k];
  k -= demo_.size();
  if (k >= ring_.size()) throw std::out_of_range("replay: index past end");
  return ring_[k];
}

std::vector<Transition> ReplayBuffer::self_snapshot() const {
  std::vector<Transition> out;
  out.reserve(ring_.size());
  // Before the first overwrite the ring is already oldest-first; afterwards
  // the cursor marks the oldest slot.
  const std::size_t start = ring_.size() < capacity_self_ ? 0 : cursor_;
  for (std::size_t k = 0; k < ring_.size(); ++k)
    out.push_back(ring_[(start + k) % ring_.size()]);
  return out;
}

namespace {

constexpr std::uint32_t kTransMagic = 0x52544251u;  // "QBTR" little-endian
constexpr std::uint32_t kTransVersion = 1;
constexpr std::uint64_t kMaxCount = 1ull << 32;

void write_state(detail::ByteWriter& w, const BipartiteState& s) {
  w.u64(static_cast<std::uint64_t>(s.n_cons));
  w.u64(static_cast<std::uint64_t>(s.n_vars));
  for (const auto& row : s.cons_feats)
    for (double x : row) w.f64(x);
  for (const auto& row : s.var_feats)
    for (double x : row) w.f64(x);
  w.u64(s.edges.size());
  for (const auto& e : s.edges) {
    w.u32(static_cast<std::uint32_t>(e.row));
    w.u32(static_cast<std::uint32_t>(e.col));
    for (double x : e.feat) w.f64(x);
  }
  for (std::size_t j = 0; j < s.candidate_mask.size(); ++j)
    w.u8(s.candidate_mask[j] ? 1 : 0);
}

BipartiteState read_state(detail::ByteReader& r) {
  BipartiteState s;
  const std::uint64_t n_cons = r.u64();
  const std::uint64_t n_vars = r.u64();
  if (n_cons > kMaxCount || n_vars > kMaxCount)
    throw std::runtime_error("transitions: implausible state size");
  s.n_cons = static_cast<int>(n_cons);
  s.n_vars = static_cast<int>(n_vars);
  s.cons_feats.resize(n_cons);
  for (auto& row : s.cons_feats)
    for (double& x : row) x = r.f64();
  s.var_feats.resize(n_vars);
  for (auto& row : s.var_feats)
    for (double& x : row) x = r.f64();
  const std::uint64_t n_edges = r.u64();
  if (n_edges > kMaxCount) throw std::runtime_error("transitions: implausible edge count");
  s.edges.resize(n_edges);
  for (auto& e : s.edges) {
    e.row = static_cast<int>(r.u32());
    e.col = static_cast<int>(r.u32());
    if (e.row < 0 || e.row >= s.n_cons || e.col < 0 || e.col >= s.n_vars)
      throw std::runtime_error("transitions: edge endpoint out of range");
    for (double& x : e.feat) x = r.f64();
  }
  s.candidate_mask.resize(n_vars);
  for (std::uint64_t j = 0; j < n_vars; ++j) s.candidate_mask[j] = r.u8() != 0;
  return s;
}

}  // namespace

std::string serialize_transitions(const std::vector<Transition>& transitions) {
  detail::ByteWriter w;
  w.u32(kTransMagic);
  w.u32(kTransVersion);
  w.u64(transitions.size());
  for (const Transition& t : transitions) {
    write_state(w, t.state);
    w.i64(t.action);
    w.f64(t.reward);
    w.u8(t.next_state.has_value() ? 1 : 0);
    if (t.next_state) write_state(w, *t.next_state);
    w.u64(t.next_candidates.size());
    for (int c : t.next_candidates) w.i64(c);
    w.u8(t.done ? 1 : 0);
    w.u8(t.origin == Transition::Origin::kDemo ? 0 : 1);
  }
  return std::move(w.out);
}

std::vector<Transition> parse_transitions(const std::string& bytes) {
  detail::ByteReader r(bytes);
  if (r.u32() != kTransMagic) throw std::runtime_error("transitions: bad magic");
  if (r.u32() != kTransVersion) throw std::runtime_error("transitions: unsupported version");
  const std::uint64_t count = r.u64();
  if (count > kMaxCount) throw std::runtime_error("transitions: implausible count");
  std::vector<Transition> out;
  out.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    Transition t;
    t.state = read_state(r);
    t.action = static_cast<int>(r.i64());
    t.reward = r.f64();
    if (r.u8() != 0) t.next_state = read_state(r);
    const std::uint64_t nc = r.u64();
    if (nc > kMaxCount) throw std::runtime_error("transitions: implausible candidate count");
    t.next_candidates.resize(nc);
    for (auto& c : t.next_candidates) c = static_cast<int>(r.i64());
    t.done = r.u8() != 0;
    t.origin = r.u8() == 0 ? Transition::Origin::kDemo : Transition::Origin::kSelf;
    if (t.done && t.next_state.has_value())
      throw std::runtime_error("transitions: terminal entry carries a next state");
    out.push_back(std::move(t));
  }
  r.expect_end();
  return out;
}

void save_transitions(const std::vector<Transition>& transitions, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  const std::string bytes = serialize_transitions(transitions);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Transition> load_transitions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_transitions(bytes);
}

}  // namespace qbranch
