#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lorajam {

using Bytes = std::vector<std::uint8_t>;
using NodeId = std::string;

// All simulation time is integer microseconds; airtime arithmetic never
// accumulates floating error across a run.
using Micros = std::chrono::microseconds;

inline constexpr Micros kForever = Micros{std::numeric_limits<std::int64_t>::max() / 4};

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PayloadTooLarge : Error {
  using Error::Error;
};
struct MissingFPort : Error {
  using Error::Error;
};
struct TooShort : Error {
  using Error::Error;
};
struct SchedulingInPast : Error {
  using Error::Error;
};
struct MissingLinkEntry : Error {
  using Error::Error;
};
struct EmptyLog : Error {
  using Error::Error;
};
struct InsufficientWarmup : Error {
  using Error::Error;
};
struct PolicyTooDeep : Error {
  using Error::Error;
};
// Scenario/schema validation failures; message carries the offending field path.
struct ScenarioError : Error {
  using Error::Error;
};

namespace hexutil {

inline char nibble(unsigned v) { return v < 10 ? char('0' + v) : char('a' + v - 10); }

inline std::string to_hex(std::span<const std::uint8_t> data) {
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(nibble(b >> 4));
    out.push_back(nibble(b & 0xF));
  }
  return out;
}

inline std::string addr_hex(std::uint32_t addr) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", addr);
  return buf;
}

inline int nibble_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

inline Bytes from_hex(std::string_view text) {
  Bytes out;
  int hi = -1;
  for (char c : text) {
    if (c == ' ' || c == ':' || c == '\t') continue;
    int v = nibble_value(c);
    if (v < 0) throw Error("invalid hex character in \"" + std::string(text) + "\"");
    if (hi < 0) {
      hi = v;
    } else {
      out.push_back(std::uint8_t(hi << 4 | v));
      hi = -1;
    }
  }
  if (hi >= 0) throw Error("odd-length hex string");
  return out;
}

}  // namespace hexutil

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic RNG. mt19937_64 is bit-stable across platforms; the
// distribution transforms live here because the std ones are not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)), seed_mix_(seed) {}

  // Independent substream derived from (seed, label); used so per-actor
  // draws stay stable when unrelated actors are added to a scenario.
  Rng fork(std::string_view label) const {
    return Rng(splitmix64(seed_mix_ ^ fnv1a64(label)));
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, n) without modulo bias.
  std::uint64_t uniform_u64(std::uint64_t n) {
    if (n == 0) throw Error("uniform_u64: empty range");
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return v % n;
  }

  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {  // inclusive
    return lo + std::int64_t(uniform_u64(std::uint64_t(hi - lo + 1)));
  }

  double uniform_double() {  // [0, 1)
    return double(gen_() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform_double() < p; }

  double gaussian(double mean, double stddev) {
    if (!have_spare_) {
      double u, v, s;
      do {
        u = 2.0 * uniform_double() - 1.0;
        v = 2.0 * uniform_double() - 1.0;
        s = u * u + v * v;
      } while (s >= 1.0 || s == 0.0);
      double m = std::sqrt(-2.0 * std::log(s) / s);
      spare_ = v * m;
      have_spare_ = true;
      return mean + stddev * u * m;
    }
    have_spare_ = false;
    return mean + stddev * spare_;
  }

  std::uint8_t byte() { return std::uint8_t(uniform_u64(256)); }

  Bytes bytes(std::size_t n) {
    Bytes out(n);
    for (auto& b : out) b = byte();
    return out;
  }

  // Index into a weight vector, proportionally.
  std::size_t pick_weighted(std::span<const double> weights) {
    double total = 0;
    for (double w : weights) total += w;
    if (total <= 0) throw Error("pick_weighted: non-positive total weight");
    double x = uniform_double() * total;
    double acc = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (x < acc) return i;
    }
    return weights.size() - 1;
  }

 private:
  std::mt19937_64 gen_;
  std::uint64_t seed_mix_ = 0;
  double spare_ = 0;
  bool have_spare_ = false;
};

inline std::string format_us(Micros t) { return std::to_string(t.count()); }

}  // namespace lorajam
