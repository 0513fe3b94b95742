#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace aggvae::inference {

struct ChainStats {
  std::uint64_t seed = 0;
  double warmup_seconds = 0.0;
  double sampling_seconds = 0.0;
  double step_size = 0.0;
  std::vector<double> inv_metric;
  std::size_t divergences = 0;  // post-warmup
  std::size_t leapfrog_steps = 0;  // post-warmup
};

/// Post-warmup draws of every recorded column, stored chain-major then
/// iteration-major with columns innermost.
class ChainSet {
 public:
  ChainSet() = default;
  ChainSet(std::vector<std::string> columns, std::size_t chains, std::size_t warmup,
           std::size_t samples);

  const std::vector<std::string>& columns() const { return columns_; }
  std::size_t num_columns() const { return columns_.size(); }
  std::size_t chains() const { return chains_; }
  std::size_t warmup() const { return warmup_; }
  std::size_t samples() const { return samples_; }

  double& at(std::size_t chain, std::size_t iter, std::size_t col);
  double at(std::size_t chain, std::size_t iter, std::size_t col) const;
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  /// Throws if absent.
  std::size_t column_index(const std::string& name) const;
  bool has_column(const std::string& name) const;
  /// samples x chains matrix for one column.
  Eigen::MatrixXd column(std::size_t col) const;
  Eigen::MatrixXd column(const std::string& name) const;
  /// Indices of columns whose name starts with `prefix` followed by '['.
  std::vector<std::size_t> indexed_columns(const std::string& prefix) const;

  double divergence_rate() const;

  std::string model;
  std::uint64_t root_seed = 0;
  std::vector<ChainStats> stats;
  bool unreliable = false;
  std::map<std::string, std::string> provenance;

 private:
  std::vector<std::string> columns_;
  std::size_t chains_ = 0;
  std::size_t warmup_ = 0;
  std::size_t samples_ = 0;
  std::vector<double> data_;
};

/// Writes the draw file and a `<path>.timing.json` sidecar holding the
/// wall-clock figures.
void save_draws(const std::filesystem::path& path, const ChainSet& set);
/// Reads the sidecar too when it exists.
ChainSet load_draws(const std::filesystem::path& path);
std::filesystem::path timing_path(const std::filesystem::path& draws_path);

struct UnitSummary {
  std::string name;
  double mean = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
};

struct PrevalenceSummary {
  std::vector<UnitSummary> old_units;
  std::vector<UnitSummary> new_units;
};

/// Pooled post-warmup summaries of theta_old[i] and theta_new[i].
PrevalenceSummary posterior_prevalence(const ChainSet& set);

}  // namespace aggvae::inference
