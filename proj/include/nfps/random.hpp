#pragma once

#include <cstdint>
#include <random>

namespace nfps {

using Rng = std::mt19937_64;

/// splitmix64 finalizer over (seed, stream); used to derive independent
/// per-example / per-pixel generators so results do not depend on scheduling.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(mix_seed(seed, stream));
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gaussian(Rng& rng, double mean, double sigma) {
  return std::normal_distribution<double>(mean, sigma)(rng);
}

inline bool bernoulli(Rng& rng, double p) {
  return std::bernoulli_distribution(p)(rng);
}

}  // namespace nfps
