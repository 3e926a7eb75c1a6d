#pragma once

#include <cstdint>
#include <string_view>

namespace egean {

// Deterministic pseudo-random generator (splitmix64 core). All randomness in
// the project flows through this type so that runs are reproducible across
// platforms and standard-library versions; std::<distribution> types are
// implementation-defined and deliberately avoided.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes exactly two uniforms per draw.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform index in [0, n).
  std::size_t uniform_index(std::size_t n);

  // Derive an independent stream keyed by a label or index. Derivation is a
  // pure function of (current seed, key): it does not advance this stream.
  Rng derive(std::string_view label) const;
  Rng derive(std::uint64_t index) const;

  std::uint64_t seed() const { return state_; }

 private:
  std::uint64_t state_;
};

// Stable 64-bit content hash (FNV-1a), used for seed derivation and for
// content-addressing run directories.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace egean
