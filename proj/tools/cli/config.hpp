#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aggvae/geometry.hpp"
#include "aggvae/priors.hpp"

namespace aggvae::cli {

struct SynthSettings {
  int rows_old = 2;
  int cols_old = 2;
  int rows_new = 3;
  int cols_new = 3;
  geometry::BoundingBox extent{0.0, 0.0, 1.0, 1.0};
  double b0 = -0.85;
  double variance = 0.01;
  double lengthscale = 0.5;
  bool zero_field = false;
  std::int64_t tests_per_unit = 1000;
  double test_skew = 0.0;
};

struct VaeSettings {
  std::vector<int> hidden;  // empty: two layers of width 4 * (K1 + K2)
  int latent_dim = 0;       // 0: ceil((K1 + K2) / 4)
  std::string activation = "tanh";
  int epochs = 200;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double final_lr_ratio = 1.0;
  double noise_sigma = 0.01;
  std::size_t training_size = 20000;
};

struct McmcSettings {
  std::size_t chains = 4;
  std::size_t warmup = 200;
  std::size_t samples = 1000;
  double target_accept = 0.8;
  int max_depth = 10;
  unsigned threads = 0;
};

struct PipelineConfig {
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir = "aggvae_out";
  std::filesystem::path boundaries_old;
  std::filesystem::path boundaries_new;
  std::filesystem::path data_old;
  std::filesystem::path data_new;
  std::filesystem::path truth;
  std::filesystem::path decoder;
  int grid_resolution = 12;
  priors::HyperPriorSpec hyperpriors;
  double intercept_sd = 5.0;
  double s_scale = 1.0;
  unsigned threads = 0;
  SynthSettings synth;
  VaeSettings vae;
  McmcSettings mcmc;

  /// Default file locations inside out_dir for unset paths.
  std::filesystem::path boundaries_old_path() const;
  std::filesystem::path boundaries_new_path() const;
  std::filesystem::path data_old_path() const;
  std::filesystem::path data_new_path() const;
  std::filesystem::path truth_path() const;
  std::filesystem::path decoder_path() const;
  std::filesystem::path draws_path(const std::string& model) const;

  std::uint64_t require_seed() const;
  /// Canonical `key = value` listing of every field, sorted by key.
  std::string canonical() const;
  /// FNV-1a of canonical(), 16 hex digits.
  std::string hash() const;
  /// seed and config hash, plus `extra`.
  std::map<std::string, std::string> provenance(
      const std::map<std::string, std::string>& extra = {}) const;
};

/// Parses `key = value` lines; '#' starts a comment. Unknown keys, repeated
/// keys and malformed values are errors naming the line.
PipelineConfig parse_config(const std::string& text, const std::string& origin = "<config>");
PipelineConfig load_config(const std::filesystem::path& path);

/// Every recognised key.
std::vector<std::string> config_keys();

}  // namespace aggvae::cli
