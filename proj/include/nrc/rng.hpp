#pragma once

#include <cstdint>
#include <random>

namespace nrc {

using Rng = std::mt19937_64;

// Component indices for master-seed expansion. The numbering is part of the
// config reference in README.md and must not change.
enum class SeedComponent : std::uint64_t {
  kCellularAutomaton = 1,
  kNeuronPlacement = 2,
  kRecurrentNoise = 3,
  kLogisticShuffle = 4,
};

// subseed(i) = master XOR (i * 0x9E3779B97F4A7C15)
constexpr std::uint64_t subseed(std::uint64_t master, SeedComponent component) {
  return master ^ (static_cast<std::uint64_t>(component) * 0x9E3779B97F4A7C15ULL);
}

}  // namespace nrc
