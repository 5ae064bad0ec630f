/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qbranch {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Neumaier-compensated accumulator. Used everywhere an area, objective or
/// mean is summed so that two routes over the same terms agree to a few ulp.
class StableSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed. Generators seeded
/// this way stay decoupled when one consumer draws a variable amount.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x51ed2701u));
}

/// Deterministic random source. All draw helpers are implemented on top of
/// the raw mt19937_64 output so results are identical across standard
/// libraries (std::uniform_*_distribution is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform index in [0, n). Rejection sampling, no modulo bias.
  std::size_t index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::index: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = gen_();
    while (v >= limit) v = gen_();
    return static_cast<std::size_t>(v % n);
  }

  /// Uniform integer in [lo, hi] inclusive.
  long long integer(long long lo, long long hi) {
    return lo + static_cast<long long>(index(static_cast<std::size_t>(hi - lo + 1)));
  }

 private:
  std::mt19937_64 gen_;
};

/// Distance of v to the nearest integer: min(v − ⌊v⌋, ⌈v⌉ − v), in [0, 0.5].
inline double fractionality_of(double v) {
  const double down = v - std::floor(v);
  return std::min(down, 1.0 - down);
}

/// Shortest decimal that parses back to the same double. "inf"/"-inf" for
/// infinities. This keeps every text artifact (instances, CSV) lossless.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline bool try_parse_double(std::string_view text, double& out) {
  if (text == "inf" || text == "+inf") {
    out = kInf;
    return true;
  }
  if (text == "-inf") {
    out = -kInf;
    return true;
  }
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc{} && res.ptr == last;
}

inline std::optional<double> try_parse_double(std::string_view text) {
  double v;
  if (!try_parse_double(text, v)) return std::nullopt;
  return v;
}

/// FNV-1a over a byte buffer; used for cheap content fingerprints in tests
/// and manifests.
inline std::uint64_t fnv1a(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace qbranch
