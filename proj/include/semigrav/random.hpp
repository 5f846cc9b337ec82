#pragma once

#include <cstdint>
#include <random>

namespace semigrav {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; a bijective mixer on 64-bit words.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Independent stream for trajectory `index` under `master_seed`. Depends only
/// on the pair, never on scheduling.
inline Rng stream_rng(std::uint64_t master_seed, std::uint64_t index) {
  std::seed_seq seq{splitmix64(master_seed), splitmix64(index ^ 0xD1B54A32D192ED03ULL),
                    splitmix64(master_seed + splitmix64(index))};
  return Rng(seq);
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng);
}

}  // namespace semigrav
