#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aggvae/geometry.hpp"
#include "aggvae/prevalence.hpp"
#include "aggvae/priors.hpp"

namespace aggvae::synth {

struct Partitions {
  geometry::PolygonSet old_set;
  geometry::PolygonSet new_set;
  std::vector<std::string> warnings;
};

/// Two axis-aligned rectangular tilings of `extent`, cells ordered row-major
/// from the bottom-left corner.
Partitions make_partitions(int rows_old, int cols_old, int rows_new, int cols_new,
                           const geometry::BoundingBox& extent);

struct TruthParams {
  double b0 = -0.85;  // logit(0.3) to two decimals
  priors::KernelSpec kernel{0.01, 0.5};
  /// Forces f = 0 on the grid.
  bool zero_field = false;
};

struct ScenarioParams {
  int rows_old = 2;
  int cols_old = 2;
  int rows_new = 3;
  int cols_new = 3;
  geometry::BoundingBox extent{0.0, 0.0, 1.0, 1.0};
  int grid_resolution = 12;
  TruthParams truth;
  std::int64_t tests_per_unit = 1000;
  /// n_tests_i = round(tests_per_unit * exp(skew * u_i)), u_i ~ Uniform(-1, 1).
  double test_skew = 0.0;

  void validate() const;
};

struct Scenario {
  ScenarioParams params;
  std::uint64_t seed = 0;
  geometry::PolygonSet polygons_old;
  geometry::PolygonSet polygons_new;
  geometry::Grid grid;
  geometry::MembershipMatrix m_old;
  geometry::MembershipMatrix m_new;
  Eigen::VectorXd field;  // f on the grid
  Eigen::VectorXd theta_old;
  Eigen::VectorXd theta_new;
  inference::PrevalenceData data_old;
  inference::PrevalenceData data_new;
  std::vector<std::string> warnings;
  std::map<std::string, std::string> provenance;
};

/// Draws one surface on the grid, forms true prevalence per unit for both
/// partitions from it, and simulates binomial counts.
Scenario simulate_counts(const ScenarioParams& params, std::uint64_t seed);

/// `era,unit,theta` rows for both partitions.
std::string truth_to_csv(const Scenario& scenario, const std::string& comment = {});

}  // namespace aggvae::synth
