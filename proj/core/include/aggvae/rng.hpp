#pragma once

#include <cstdint>
#include <random>

namespace aggvae {

using Engine = std::mt19937_64;

// Every random consumer in the pipeline owns a generator derived from
// (root seed, stream, index). Streams never share state.
enum class Stream : std::uint64_t {
  kHyperparameters = 1,
  kTrainingDraw = 2,
  kTruthField = 3,
  kCounts = 4,
  kVaeInit = 5,
  kVaeShuffle = 6,
  kVaeNoise = 7,
  kPriorSample = 8,
  kChain = 9,
  kReference = 10,
  kMvn = 11,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed for the `index`-th generator of `stream` under `root`.
std::uint64_t derive_seed(std::uint64_t root, Stream stream,
                          std::uint64_t index = 0) noexcept;

Engine make_engine(std::uint64_t root, Stream stream, std::uint64_t index = 0);

/// 64-bit FNV-1a, used for config and grid fingerprints.
std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

}  // namespace aggvae
