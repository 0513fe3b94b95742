#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aggvae/chains.hpp"

namespace aggvae::diagnostics {

/// Linear interpolation between order statistics (h = (n - 1) p).
double quantile_sorted(const std::vector<double>& sorted, double p);
double quantile(std::vector<double> values, double p);

/// Average-rank normal scores over all entries of `draws` (samples x chains):
/// Phi^-1((r - 3/8) / (S + 1/4)).
Eigen::MatrixXd rank_normalize(const Eigen::MatrixXd& draws);

/// Split-R-hat after rank normalization. `draws` is samples x chains.
double split_rhat(const Eigen::MatrixXd& draws);
/// Bulk effective sample size after rank normalization.
double ess_bulk(const Eigen::MatrixXd& draws);

/// The two statistics on raw (not rank-normalized) draws, split chains.
double split_rhat_raw(const Eigen::MatrixXd& draws);
double ess_raw(const Eigen::MatrixXd& draws);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  double r_hat = 1.0;
  double ess_bulk = 0.0;
};

/// One row per column, skipping sampler bookkeeping columns (prefix "__").
std::vector<ParameterSummary> summarize(const inference::ChainSet& set);
std::string summaries_to_csv(const std::vector<ParameterSummary>& rows);

struct ModelSummary {
  std::string label;
  double elapsed_seconds = 0.0;  // sum of per-chain sampling time
  double avg_ess_re = 0.0;
  double ess_per_minute = 0.0;
  double max_rhat_old = 1.0;
  double max_rhat_new = 1.0;
  double avg_ess_old = 0.0;
  double avg_ess_new = 0.0;
  double divergence_rate = 0.0;
  bool unreliable = false;
};

/// Statistics over the spatial random-effect columns re_old[i], re_new[i].
ModelSummary summarize_model(const inference::ChainSet& set, std::string label);

struct ComparisonReport {
  ModelSummary first;   // conventionally aggGP
  ModelSummary second;  // conventionally aggVAE
};

ComparisonReport comparison_report(const inference::ChainSet& agggp,
                                   const inference::ChainSet& aggvae);

/// Compact durations: "14h", "8s", "2m 5s", "350ms".
std::string format_duration(double seconds);
/// Aligned plain-text table, one row per metric.
std::string format_table(const ComparisonReport& report);
/// metric,<label a>,<label b> rows with raw numbers.
std::string format_csv(const ComparisonReport& report);

}  // namespace aggvae::diagnostics
