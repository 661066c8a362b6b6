#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace hgnn {

using NodeId = std::uint32_t;
using EdgeIdx = std::uint64_t;

inline constexpr NodeId kInvalidNode = std::numeric_limits<NodeId>::max();

// Deterministic generator used everywhere a seeded stream is needed.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive independent per-batch / per-epoch
/// streams from one user seed so that scheduling cannot reorder randomness.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

}  // namespace hgnn
