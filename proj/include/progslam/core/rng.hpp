#pragma once

#include <cstdint>
#include <random>

namespace progslam {

// splitmix64, used to mix stream keys into generator seeds.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic RNG stream. Streams are keyed so that independent parts of
// the system (per frame, per iteration, per purpose) draw from independent
// sequences regardless of evaluation order or threading.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(mix64(seed)) {}

  static Rng keyed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t s = mix64(seed);
    s = mix64(s ^ a);
    s = mix64(s ^ b);
    s = mix64(s ^ c);
    return Rng(s);
  }

  // Uniform double in [0, 1). Bit-level construction keeps runs reproducible
  // across standard library implementations.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t index(uint64_t n) {
    // Rejection sampling keeps the distribution exact.
    uint64_t bound = n * (UINT64_MAX / n);
    uint64_t v;
    do {
      v = engine_();
    } while (v >= bound);
    return v % n;
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    // Box-Muller on our own uniforms for cross-platform determinism.
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return mean + stddev * r * std::cos(a);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  explicit Rng(uint64_t seed, bool) : engine_(seed) {}

  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace progslam
