/* SPDX-License-Identifier: Apache-2.0 */
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qbranch/featurize.hpp"

namespace qbranch {

/// One branching decision recorded from the environment, replayable for
/// Q-learning. Terminal transitions carry no next state; non-terminal ones
/// keep their next candidate set so the target argmax is well-defined
/// offline, where the per-node action space is long gone.
struct Transition {
  enum class Origin { kDemo, kSelf };

  BipartiteState state;
  int action = -1;
  double reward = 0.0;
  std::optional<BipartiteState> next_state;
  std::vector<int> next_candidates;
  bool done = false;
  Origin origin = Origin::kSelf;

  bool operator==(const Transition&) const = default;
};

/// Native binary encoding, bit-exact for doubles. Round-trips exactly.
std::string serialize_transitions(const std::vector<Transition>& transitions);

/// Parses serialize_transitions output. Throws std::runtime_error on a
/// malformed or truncated buffer.
std::vector<Transition> parse_transitions(const std::string& bytes);

void save_transitions(const std::vector<Transition>& transitions, const std::string& path);
std::vector<Transition> load_transitions(const std::string& path);

}  // namespace qbranch
