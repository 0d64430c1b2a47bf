#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace volres {

// splitmix64, used both for seeding and for order-independent key mixing.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic key derivation: hash_keys(seed, epoch, sample) gives the
// per-sample stream so parallel generation is order-independent.
inline std::uint64_t hash_keys(std::initializer_list<std::uint64_t> keys) {
  std::uint64_t acc = 0x243f6a8885a308d3ULL;  // arbitrary nonzero start
  for (std::uint64_t k : keys) acc = splitmix64(acc ^ k);
  return acc;
}

// xoshiro256** with explicit float conversions. std::uniform_*_distribution
// is implementation-defined, so none of it is used here: the same seed must
// produce the same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) {
    std::uint64_t s = seed;
    for (auto& word : state_) {
      s = splitmix64(s);
      word = s;
    }
    have_spare_ = false;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n) by rejection; unbiased and stream-deterministic.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller; the spare value is cached, so draws come
  // in a fixed sequence for a fixed seed.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform direction on the sphere: normalized Gaussian 3-vector.
  std::array<double, 3> unit_vector() {
    while (true) {
      std::array<double, 3> v{normal(), normal(), normal()};
      double n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
      if (n2 > 1e-12) {
        double inv = 1.0 / std::sqrt(n2);
        return {v[0] * inv, v[1] * inv, v[2] * inv};
      }
    }
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace volres
