/* SPDX-License-Identifier: Apache-2.0 */
#pragma once

#include <cstddef>
#include <vector>

#include "qbranch/common.hpp"
#include "qbranch/transition.hpp"

namespace qbranch {

/// Experience store with two partitions: a permanent demonstration list
/// that is never evicted or overwritten, and a fixed-capacity ring of
/// self-generated transitions with FIFO overwrite. Episodes accumulate in a
/// caller-held temporary list and enter the ring only through an admitted
/// flush, which is how storage stays gated on policy quality.
class ReplayBuffer {
 public:
  ReplayBuffer(std::vector<Transition> demo, std::size_t capacity_self);

  /// Appends all of temp to the ring when admit is set (overwriting oldest
  /// self transitions once full); always clears temp.
  void flush_episode(std::vector<Transition>& temp, bool admit);

  /// batch_size draws uniform with replacement over demo ∪ ring, so the
  /// demo:self mix follows ring occupancy. Throws std::invalid_argument
  /// when the buffer is empty or batch_size < 1.
  std::vector<Transition> sample(int batch_size, Rng& rng) const;

  std::size_t demo_size() const { return demo_.size(); }
  std::size_t self_size() const { return ring_.size(); }
  std::size_t size() const { return demo_.size() + ring_.size(); }
  std::size_t capacity_self() const { return capacity_self_; }

  /// Element view: demo entries first, then self entries in an unspecified
  /// but stable order.
  const Transition& at(std::size_t k) const;

  /// Self-generated transitions ordered oldest to newest.
  std::vector<Transition> self_snapshot() const;

 private:
  std::vector<Transition> demo_;
  std::vector<Transition> ring_;
  std::size_t capacity_self_ = 0;
  std::size_t cursor_ = 0;  // next FIFO overwrite slot once the ring is full
};

}  // namespace qbranch
