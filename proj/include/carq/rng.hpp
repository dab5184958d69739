#pragma once

#include <cstdint>
#include <cmath>
#include <initializer_list>

#include "carq/normal.hpp"

namespace carq {

// splitmix64 step. Used both as a seed expander and as the stream
// derivation hash: every parallel unit of work (bootstrap draw,
// Monte Carlo replication, table cell) runs on an Rng seeded by
// derive_seed(parent_seed, index), which makes results independent
// of scheduling and thread count.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL + (tag << 1));
  std::uint64_t a = splitmix64_next(s);
  return a ^ splitmix64_next(s);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = seed;
  for (std::uint64_t t : tags) s = derive_seed(s, t);
  return s;
}

// FNV-1a over a byte string; stable across platforms. Used to turn
// human-readable cell keys into seed tags.
inline std::uint64_t fnv1a64(const char* data, std::size_t len) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// xoshiro256++ with splitmix64 seeding. All samplers below are defined
// in terms of the raw 64-bit stream only, so a given seed produces the
// same values on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64_next(sm);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n). Multiply-shift; bias is O(n/2^64).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // Standard exponential via inverse CDF; strictly positive for u in [0,1).
  double exponential() { return -std::log1p(-uniform()); }

  // Standard normal via inverse CDF. Stateless (one uniform per draw).
  double normal() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return normal_quantile(u);
  }

  // Student-t with 3 degrees of freedom: Z0 / sqrt((Z1^2+Z2^2+Z3^2)/3).
  double student_t3() {
    double z0 = normal();
    double z1 = normal(), z2 = normal(), z3 = normal();
    return z0 / std::sqrt((z1 * z1 + z2 * z2 + z3 * z3) / 3.0);
  }

  // Beta(2,2): the median of three independent uniforms.
  double beta22() {
    double u1 = uniform(), u2 = uniform(), u3 = uniform();
    double lo = std::fmin(u1, u2), hi = std::fmax(u1, u2);
    return std::fmin(std::fmax(lo, u3), hi);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t state_[4];
};

}  // namespace carq
