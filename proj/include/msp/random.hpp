#ifndef MSP_RANDOM_HPP
#define MSP_RANDOM_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace msp {

// Reproducible seeded stream.  Splittable: child streams are derived from
// (base seed, stream id), so parallel replicates can each own an
// independent stream while the whole run stays deterministic.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed)
      : seed_(seed), engine_(mix(seed)) {}

  // Child stream for replicate / worker `stream_id`.  Independent of how
  // many draws have been taken from the parent.
  RandomSource split(std::uint64_t stream_id) const {
    return RandomSource(mix(seed_ ^ mix(stream_id + 0x9e3779b97f4a7c15ULL)));
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on (0,1); never returns 0 or 1.
  double uniform() {
    const double u = (engine_() >> 11) * 0x1.0p-53;
    return u > 0.0 ? u : 0x1.0p-53;
  }

  // Standard normal via Box-Muller (deterministic call sequence: two
  // uniforms per draw, no cached spare).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // Uniform integer in [0, bound).
  std::uint64_t integer(std::uint64_t bound) {
    // modulo bias is < 2^-40 for the bounds used here
    return engine_() % bound;
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace msp

#endif
