#pragma once

#include <cstdint>
#include <functional>

#include "aggvae/chains.hpp"
#include "aggvae/models.hpp"

namespace aggvae::inference {

struct NutsSettings {
  std::size_t chains = 4;
  std::size_t warmup = 200;
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
  double target_accept = 0.8;
  int max_depth = 10;
  double max_delta_h = 1000.0;
  /// Post-warmup divergence fraction above which the run is flagged.
  double unreliable_divergence_rate = 0.2;
  /// 0 picks min(chains, hardware threads). Results do not depend on it.
  unsigned threads = 0;
  /// Called after each iteration with (chain, iteration) where iteration
  /// counts warmup first. May be invoked from several threads.
  std::function<void(std::size_t, std::size_t)> progress;

  void validate() const;
};

ChainSet run_nuts(const LogDensity& model, const NutsSettings& settings);
ChainSet run_nuts(const ModelSpec& spec, const NutsSettings& settings);

struct LeapfrogTiming {
  double median_seconds = 0.0;
  std::size_t steps = 0;
};

/// Median wall-clock of single leapfrog steps (one gradient evaluation each)
/// from a random initial point with unit metric.
LeapfrogTiming time_leapfrog(const LogDensity& model, std::size_t steps, double step_size,
                             std::uint64_t seed);

}  // namespace aggvae::inference
