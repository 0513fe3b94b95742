#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Dense>

#include "aggvae/geometry.hpp"
#include "aggvae/rng.hpp"

namespace aggvae::priors {

/// Squared-exponential (RBF) kernel: variance * exp(-d^2 / (2 l^2)).
struct KernelSpec {
  double variance = 1.0;
  double lengthscale = 1.0;

  double sigma() const;
  void validate() const;
};

/// lengthscale ~ InverseGamma(shape, scale); sigma ~ HalfNormal(sigma_scale).
/// sigma_scale is the standard deviation of the underlying normal.
struct HyperPriorSpec {
  double lengthscale_shape = 3.0;
  double lengthscale_scale = 3.0;
  double sigma_scale = 0.05;

  void validate() const;
};

enum class CarFamily { kCar, kIcar, kPcar, kLcar, kBym };

struct PrecisionSpec {
  CarFamily family = CarFamily::kIcar;
  Eigen::MatrixXd adjacency;
  double tau = 1.0;
  double alpha = 0.0;
  double tau_s = 1.0;
  double tau_iid = 1.0;
};

struct MvnSample {
  Eigen::VectorXd values;
  std::uint64_t seed = 0;
};

Eigen::MatrixXd squared_distances(const geometry::Grid& grid);
Eigen::MatrixXd rbf_covariance(const geometry::Grid& grid, const KernelSpec& kernel);
Eigen::MatrixXd rbf_covariance(const Eigen::MatrixXd& squared_distances,
                               const KernelSpec& kernel);

/// Precision matrix of the selected CAR-family prior, with D = diag(row sums
/// of A). BYM follows (1/tau_s)(D - A) + (1/tau_iid) I.
Eigen::MatrixXd car_precision(const PrecisionSpec& spec);

/// Lower Cholesky factor of cov + jitter * I, escalating jitter tenfold from
/// `initial_jitter` (default 1e-8 * mean diagonal) up to 1e-4 * mean diagonal.
struct JitteredCholesky {
  Eigen::MatrixXd lower;
  double jitter = 0.0;
};
JitteredCholesky jittered_cholesky(const Eigen::MatrixXd& cov,
                                   std::optional<double> initial_jitter = {});

/// f = L * eps with eps standard normal from the generator seeded by `seed`.
MvnSample sample_mvn_cov(const Eigen::MatrixXd& cov, std::uint64_t seed,
                         std::optional<double> jitter = {});

Eigen::VectorXd standard_normal(Eigen::Index n, Engine& engine);

KernelSpec sample_hyperparameters(const HyperPriorSpec& hp, Engine& engine);
KernelSpec sample_hyperparameters(const HyperPriorSpec& hp, std::uint64_t seed);

double log_inverse_gamma(double x, double shape, double scale);
double log_half_normal(double x, double scale);
double log_normal(double x, double mean, double sd);

/// InverseGamma log-density at the lengthscale plus half-normal log-density
/// at sigma, normalising constants included. -inf outside the support.
double log_density_hyperpriors(const KernelSpec& kernel, const HyperPriorSpec& hp);
double log_density_hyperpriors(double lengthscale, double sigma,
                               const HyperPriorSpec& hp);

}  // namespace aggvae::priors
