#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace jpdvt {

// Counter-style PRNG built on splitmix64. Streams are derived from a base
// seed plus a label and up to two indices, so any component (a training step,
// a puzzle solve, a corpus sample) owns a private stream that is independent
// of evaluation order. That is what makes interrupted/resumed training and
// parallel solves reproduce bit-identically.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ULL)) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // (0, 1]
  double uniform_open() { return 1.0 - uniform(); }

  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    // Rejection-free modulo is fine here; n is tiny compared to 2^64.
    return next_u64() % n;
  }

  Rng derive(std::string_view label, uint64_t a = 0, uint64_t b = 0) const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    h = mix(h ^ mix(a + 0x632be59bd9b4e019ULL));
    h = mix(h ^ mix(b + 0x9e6c63d0876a9a47ULL));
    Rng out(0);
    out.state_ = mix(state_seed_value() ^ h);
    return out;
  }

 private:
  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t state_seed_value() const { return state_; }

  uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace jpdvt
