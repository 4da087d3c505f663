#pragma once

#include <cstdint>
#include <random>

namespace grex {

/// Deterministic random source. mt19937_64 is fully specified by the
/// standard and the uniform mappings below avoid std::*_distribution,
/// whose output is implementation-defined; streams therefore reproduce
/// bit-for-bit across platforms and across serial/parallel schedules.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t uniform_int(std::uint64_t bound) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * bound) >> 64);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Stable substream derivation: hash(seed, stream) via splitmix64 mixing.
  /// Parallel consumers seed Rng(derive(seed, index)) so schedules cannot
  /// change results.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
  }

  /// Independent stream derived from this Rng's seed (not its current state).
  Rng substream(std::uint64_t index) const { return Rng(derive(seed_, index)); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace grex
