#pragma once

#include <cmath>
#include <cstdint>

namespace odcs {

/// PCG32 generator (O'Neill). Two words of state, identical sequences on
/// every platform, trivially serializable. All randomness in the toolkit
/// flows through this type so that runs are reproducible bit for bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = kDefaultStream) {
    state_ = 0u;
    inc_ = (stream << 1u) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
  }

  static Rng from_state(std::uint64_t state, std::uint64_t inc) {
    Rng r(0);
    r.state_ = state;
    r.inc_ = inc;
    return r;
  }

  std::uint32_t next_u32() {
    std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  std::uint64_t next_u64() {
    std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Unbiased integer in [0, bound).
  std::uint32_t below(std::uint32_t bound) {
    std::uint32_t threshold = (0u - bound) % bound;
    for (;;) {
      std::uint32_t r = next_u32();
      if (r >= threshold) return r % bound;
    }
  }

  bool coin() { return (next_u32() & 1u) != 0u; }

  /// Uniform double in [0, 1).
  double uniform() { return next_u32() * (1.0 / 4294967296.0); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Normal deviate via Box-Muller. Consumes two uniforms, no cached spare,
  /// so the stream position depends only on the number of calls.
  float normal(float mean, float stddev) {
    double u1 = (next_u32() + 0.5) * (1.0 / 4294967296.0);  // (0, 1)
    double u2 = next_u32() * (1.0 / 4294967296.0);
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    return static_cast<float>(mean + stddev * z);
  }

  std::uint64_t state() const { return state_; }
  std::uint64_t inc() const { return inc_; }

  static constexpr std::uint64_t kDefaultStream = 0x14057b7ef767814fULL;

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
};

/// splitmix64 step, used to derive independent seeds from a base seed plus
/// a purpose tag (epoch number, sample slot, ...).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return mix_seed(mix_seed(a, b, c), d);
}

}  // namespace odcs
