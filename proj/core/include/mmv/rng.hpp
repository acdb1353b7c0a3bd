// Counter-based pseudo-random generator (SplitMix64).
//
// The state is a 64-bit counter advanced by the SplitMix64 increment; each
// output is the SplitMix64 finalizer applied to the state. Streams are keyed
// by (seed, domain string, two indices), so any point in a run (a sample, an
// epoch, an optimizer step) owns an independent generator that can be
// reconstructed without replaying history.
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mmv/hashing.hpp"

namespace mmv {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Independent stream for (seed, domain, a, b).
  static Rng derive(std::uint64_t seed, std::string_view domain,
                    std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = fnv1a64(domain, seed ^ 0x9E3779B97F4A7C15ull);
    h = mix(h ^ mix(a));
    h = mix(h ^ mix(b ^ 0xD1B54A32D192ED03ull));
    return Rng(h);
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix(state_);
  }

  // Uniform in [0, 1), 24 bits of mantissa, exactly representable in float.
  float next_float() {
    return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
  }

  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  float uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

  // Uniform integer in [0, n). Modulo bias is negligible for n << 2^64.
  std::uint64_t uniform_int(std::uint64_t n) { return n ? next_u64() % n : 0; }

  // Box-Muller. One draw per call; the sine half of the pair is discarded.
  float normal(float mean = 0.0f, float stddev = 1.0f) {
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    return mean + stddev * static_cast<float>(z);
  }

  // Normal truncated to [lo_sigmas, hi_sigmas] standard deviations, rescaled by stddev.
  float trunc_normal(float stddev, float lo_sigmas = -2.0f, float hi_sigmas = 2.0f) {
    for (;;) {
      float z = normal(0.0f, 1.0f);
      if (z >= lo_sigmas && z <= hi_sigmas) return stddev * z;
    }
  }

  // Uniform direction on the (dim-1)-sphere.
  std::vector<float> unit_vector(int dim) {
    std::vector<float> v(static_cast<std::size_t>(dim));
    double norm_sq = 0.0;
    for (;;) {
      for (auto& x : v) {
        x = normal();
        norm_sq += static_cast<double>(x) * x;
      }
      if (norm_sq > 1e-12) break;
      norm_sq = 0.0;
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& x : v) x = static_cast<float>(x * inv);
    return v;
  }

  // Permutation of [0, n) by Fisher-Yates.
  std::vector<std::uint32_t> permutation(std::uint32_t n) {
    std::vector<std::uint32_t> p(n);
    for (std::uint32_t i = 0; i < n; ++i) p[i] = i;
    for (std::uint32_t i = n; i > 1; --i) {
      std::uint32_t j = static_cast<std::uint32_t>(uniform_int(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace mmv
