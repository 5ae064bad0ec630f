/* SPDX-License-Identifier: Apache-2.0 */
#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace qbranch::detail {

/// Append-only writer and bounds-checked reader for the native binary
/// checkpoint formats. Doubles pass through as raw bytes, so round-trips
/// are bit-exact.
struct ByteWriter {
  std::string out;

  void u8(std::uint8_t v) { out.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void i64(std::int64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void f64s(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }

 private:
  void raw(const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); }
};

struct ByteReader {
  const std::string& in;
  std::size_t pos = 0;

  explicit ByteReader(const std::string& bytes) : in(bytes) {}

  std::uint8_t u8() {
    std::uint8_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::int64_t i64() {
    std::int64_t v;
    raw(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    raw(&v, sizeof v);
    return v;
  }
  std::vector<double> f64s(std::uint64_t max_len) {
    const std::uint64_t n = u64();
    if (n > max_len) throw std::runtime_error("binary parse: implausible array length");
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  void expect_end() const {
    if (pos != in.size()) throw std::runtime_error("binary parse: trailing bytes");
  }

 private:
  void raw(void* p, std::size_t n) {
    if (pos + n > in.size()) throw std::runtime_error("binary parse: truncated input");
    std::memcpy(p, in.data() + pos, n);
    pos += n;
  }
};

}  // namespace qbranch::detail
