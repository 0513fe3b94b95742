#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace aggvae::inference {

/// Test counts per areal unit for one boundary system.
struct PrevalenceData {
  std::vector<std::string> labels;
  std::vector<std::int64_t> n_tests;
  std::vector<std::int64_t> n_pos;

  std::size_t size() const { return labels.size(); }
  void validate() const;
  /// n_pos / n_tests, NaN where n_tests is zero.
  Eigen::VectorXd crude() const;
};

/// Header `unit,n_tests,n_pos`; lines starting with '#' are comments.
PrevalenceData parse_prevalence_csv(std::string_view text);
PrevalenceData load_prevalence(const std::filesystem::path& path);
std::string prevalence_to_csv(const PrevalenceData& data,
                              const std::string& comment = {});

double log_binomial_coefficient(std::int64_t n, std::int64_t k);

/// Sum of Binomial(n_pos | n_tests, logistic(eta_i)) log-pmfs. When `grad`
/// is given it receives d/d eta_i = n_pos_i - n_tests_i * theta_i.
double binomial_log_likelihood(const PrevalenceData& data, const Eigen::VectorXd& eta,
                               Eigen::VectorXd* grad = nullptr);

double logistic(double x);

}  // namespace aggvae::inference
