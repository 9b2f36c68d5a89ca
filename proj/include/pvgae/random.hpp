#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "pvgae/error.hpp"

namespace pvgae {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t v, int k) {
  return (v << k) | (v >> (64 - k));
}

}  // namespace detail

// Seeded deterministic PRNG (xoshiro256++ seeded through splitmix64).
// Every stochastic operation in the library takes a RandomSource explicitly;
// there is no ambient randomness anywhere.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = detail::splitmix64(sm);
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    const std::uint64_t result =
        detail::rotl64(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl64(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; the second draw of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Unbiased integer in [0, n) (Lemire's multiply-shift with rejection).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ContractError("RandomSource::below: n must be positive");
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(below(static_cast<std::uint64_t>(n)));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  // Independent stream derived from (seed, tag). Pure function of the two:
  // the parent's position in its own sequence does not leak in.
  RandomSource child(std::uint64_t tag) const {
    std::uint64_t sm = seed_ ^ (0x9e3779b97f4a7c15ULL * (tag + 1));
    const std::uint64_t derived = detail::splitmix64(sm);
    return RandomSource(derived);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stream tags used to derive the per-purpose child streams of one run.
namespace stream {
constexpr std::uint64_t kDataset = 0x01;
constexpr std::uint64_t kLinkSplit = 0x02;
constexpr std::uint64_t kNodeSplit = 0x03;
constexpr std::uint64_t kSensitiveMask = 0x04;
constexpr std::uint64_t kTrain = 0x05;
constexpr std::uint64_t kEval = 0x06;
// children of kTrain
constexpr std::uint64_t kInit = 0x11;
constexpr std::uint64_t kLatentX = 0x12;
constexpr std::uint64_t kLatentS = 0x13;
// children of kDataset
constexpr std::uint64_t kSbmEdges = 0x21;
constexpr std::uint64_t kSbmLabels = 0x22;
constexpr std::uint64_t kSbmFlips = 0x23;
constexpr std::uint64_t kSbmFeatures = 0x24;
// children of kEval
constexpr std::uint64_t kAttackMlp = 0x31;
constexpr std::uint64_t kAttackMargin = 0x32;
constexpr std::uint64_t kAttackBudget = 0x33;
constexpr std::uint64_t kGroupReport = 0x34;
}  // namespace stream

}  // namespace pvgae
