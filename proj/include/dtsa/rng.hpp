#pragma once

#include <cmath>
#include <cstdint>

namespace dtsa {

// splitmix64. Small, fast, and statistically fine for simulation noise; also
// used as a mixer to derive independent substreams keyed by (seed, replica,
// iteration, node), which keeps every trajectory reproducible no matter in
// which order its pieces are evaluated.
struct SplitMix64 {
  std::uint64_t state = 0;

  explicit SplitMix64(std::uint64_t seed = 0) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // fair sign, +1.0 or -1.0
  double rademacher() { return (next() >> 63) ? 1.0 : -1.0; }
};

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t a,
                                    std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = mix64(seed + 0x9e3779b97f4a7c15ULL);
  s = mix64(s ^ (a + 0xbf58476d1ce4e5b9ULL));
  s = mix64(s ^ (b + 0x94d049bb133111ebULL));
  s = mix64(s ^ (c + 0x2545f4914f6cdd1dULL));
  return s;
}

// Box-Muller; draws two uniforms per call. Instance generation is rare, so
// no caching of the second deviate.
inline double standard_normal(SplitMix64& g) {
  const double u1 = 1.0 - g.uniform01();  // (0, 1]
  const double u2 = g.uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

// Index into a discrete distribution given by weights (assumed to sum to ~1).
template <class Weights>
inline std::size_t sample_discrete(SplitMix64& g, const Weights& w, std::size_t n) {
  const double u = g.uniform01();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    acc += w(i);
    if (u < acc) return i;
  }
  return n - 1;
}

}  // namespace dtsa
