#include "egean/rng.hpp"

#include <cmath>

namespace egean {

double Rng::normal() {
  // Box-Muller; u1 floored away from zero so log() is finite.
  double u1 = uniform();
  double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

std::size_t Rng::uniform_index(std::size_t n) {
  // Rejection-free multiply-shift; bias is negligible for n << 2^64.
  return static_cast<std::size_t>(next_u64() % n);
}

Rng Rng::derive(std::string_view label) const {
  std::uint64_t h = fnv1a64(label);
  return Rng(state_ ^ (h + 0x9e3779b97f4a7c15ULL + (state_ << 6) + (state_ >> 2)));
}

Rng Rng::derive(std::uint64_t index) const {
  std::uint64_t z = index + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return Rng(state_ ^ z);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace egean
