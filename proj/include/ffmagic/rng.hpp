#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

namespace ffmagic {

/// Counter-based generator (SplitMix64). Streams are reproducible bit-for-bit
/// across platforms; substreams are derived by hashing (seed, label) so that
/// trajectories and estimators never share a stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform on [0,1) with 53 random bits. Avoids std::ranlux-style
  /// distribution objects whose output differs between standard libraries.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Standard normal via Box-Muller. Consumes two uniforms per call and keeps
  /// no cached spare, so the draw count stays a pure function of call count.
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  std::uint64_t seed() const { return seed_; }

  /// Independent substream addressed by a label; derivation uses the original
  /// seed, not the current state, so substreams do not depend on draw order.
  Rng child(std::uint64_t label) const { return Rng(derive(seed_, label)); }

  static std::uint64_t derive(std::uint64_t base, std::uint64_t label) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (label + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace ffmagic
