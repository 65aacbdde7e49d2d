#pragma once

#include <cstdint>
#include <random>

namespace reachsos {

// Deterministic RNG with explicit stream derivation. mt19937_64 is fully
// specified by the standard and the double mappings below avoid
// std::uniform_real_distribution (whose output is implementation-defined), so
// identical seeds give identical bytes on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  // Independent stream for (seed, index): lets parallel loops hand each task
  // its own generator while keeping results equal to the serial order.
  static Rng stream(uint64_t seed, uint64_t index);

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0,1), 53-bit resolution.
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Standard normal via Box-Muller (no rejection, so the draw count per call
  // is fixed and streams stay aligned).
  double normal();

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 step; used for seed derivation only.
uint64_t splitmix64(uint64_t& state);

}  // namespace reachsos
