#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace drsub {

/// SplitMix64 finalizer; used to derive independent seeds from (seed, counter).
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic random stream.
///
/// Stream contract (fixed so that replays are testable):
///  - uniform(): consumes one 64-bit engine output, returns k * 2^-53 in [0, 1).
///  - gaussian(): consumes exactly two uniforms (Box-Muller, cosine branch,
///    no caching of the sine branch).
/// The engine is std::mt19937_64, whose output sequence is fixed by the standard.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  /// Independent substream for one trial. Counter-based: depends only on
  /// (master_seed, run_id), never on scheduling.
  static Rng for_run(std::uint64_t master_seed, std::uint64_t run_id) {
    return Rng(splitmix64(master_seed) ^ splitmix64(0xd1b54a32d192ed03ULL + run_id));
  }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double gaussian() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double gaussian(double mean, double sd) { return mean + sd * gaussian(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace drsub
