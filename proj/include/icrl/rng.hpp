#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace icrl {

using Rng = std::mt19937_64;

/// Named sub-stream seeding. Every random consumer (mdp, features, rollout,
/// init, eval, ...) draws from its own stream derived from one master seed,
/// so adding draws in one component never shifts another.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                          std::uint64_t index = 0);

inline Rng make_stream(std::uint64_t master, std::string_view stream,
                       std::uint64_t index = 0) {
  return Rng(derive_seed(master, stream, index));
}

/// Uniform draw on [0, 1).
inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace icrl
