#pragma once

// Deterministic random streams for reproducible Monte Carlo.
//
// xoshiro256++ with splitmix64 seeding. Replica streams are derived from
// (master seed, stream index) so that runs are reproducible regardless of
// how replicas are scheduled across workers.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace cfpd {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) { reseed(seed, 0); }
  Rng(std::uint64_t seed, std::uint64_t stream) { reseed(seed, stream); }

  // Derives the state from (seed, stream); distinct streams are
  // statistically independent for all practical purposes.
  void reseed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t sm = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    for (auto& word : state_) word = splitmix64(sm);
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0,1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform on the open interval (0,1).
  double uniform_open01() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Beta(1, theta): density theta * (1-x)^(theta-1) on (0,1).
  double beta_one(double theta) {
    return 1.0 - std::pow(uniform_open01(), 1.0 / theta);
  }

  // Poisson(mean) by Knuth's product method, splitting large means so the
  // running product never underflows.
  std::uint64_t poisson(double mean) {
    if (!(mean >= 0.0)) throw std::invalid_argument("poisson: mean < 0");
    std::uint64_t n = 0;
    while (mean > 30.0) {
      n += poisson_small(30.0);
      mean -= 30.0;
    }
    return n + poisson_small(mean);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t poisson_small(double mean) {
    const double limit = std::exp(-mean);
    double prod = uniform01();
    std::uint64_t k = 0;
    while (prod > limit) {
      ++k;
      prod *= uniform01();
    }
    return k;
  }

  std::array<std::uint64_t, 4> state_{};
};

}  // namespace cfpd
