#pragma once

/**
 * Deterministic random number generation.
 *
 * Everything stochastic in this library draws from SplitMix64 streams so
 * that runs are bit-reproducible across platforms and compilers (the
 * <random> distributions are implementation-defined and would break the
 * byte-identical-metrics contract). Streams can be forked per entity:
 * derive(seed, id) yields an independent stream for each (seed, id) pair,
 * which is what lets rollouts execute in any order without perturbing the
 * draw sequence of their siblings.
 */

#include <cmath>
#include <cstdint>
#include <vector>

#include "cose/errors.hpp"

namespace cose {

inline uint64_t splitmix64_next(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() { return splitmix64_next(state_); }

  // uniform in [0, 1)
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform integer in [0, n)
  uint64_t next_below(uint64_t n) {
    // modulo bias is < 2^-40 for the n used here (n <= 2^20); acceptable
    return n <= 1 ? 0 : next_u64() % n;
  }

  bool next_bernoulli(double p) { return next_double() < p; }

  // standard normal via Box-Muller (one value per call, no caching so the
  // draw count stays predictable)
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  // Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 boosted via the
  // U^(1/shape) identity.
  double next_gamma(double shape) {
    if (!(shape > 0.0)) throw InvalidInputError("next_gamma: shape must be > 0");
    if (shape < 1.0) {
      double u = next_double();
      while (u <= 0.0) u = next_double();
      return next_gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = next_normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = next_double();
      if (u < 1.0 - 0.0331 * (x * x) * (x * x)) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Beta(a, b); degenerate shapes collapse to the corresponding endpoint.
  double next_beta(double a, double b) {
    if (a <= 0.0 && b <= 0.0) throw InvalidInputError("next_beta: both shapes zero");
    if (a <= 0.0) return 0.0;
    if (b <= 0.0) return 1.0;
    double x = next_gamma(a);
    double y = next_gamma(b);
    return x / (x + y);
  }

  // index sampled proportionally to the (non-negative) entries
  size_t next_weighted(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw InvalidInputError("next_weighted: total weight is not positive");
    double u = next_double() * total;
    double acc = 0.0;
    for (size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

// Independent stream for a (parent seed, entity id) pair. Mixing through
// SplitMix64 twice decorrelates consecutive ids.
inline uint64_t derive_seed(uint64_t seed, uint64_t id) {
  uint64_t s = seed ^ (0x9e3779b97f4a7c15ull + id);
  splitmix64_next(s);
  uint64_t t = s;
  return splitmix64_next(t);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

}  // namespace cose
