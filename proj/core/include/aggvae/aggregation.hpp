#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "aggvae/geometry.hpp"
#include "aggvae/priors.hpp"

namespace aggvae::aggregation {

/// Unscaled within-polygon sums (f-bar) plus the quadrature constant c.
struct AggregateVector {
  Eigen::VectorXd values;
  double cell_area = 0.0;
  std::string polygon_set_name;

  Eigen::VectorXd scaled() const { return cell_area * values; }
};

/// Old-boundary block first, then new-boundary block.
struct JointAggregate {
  Eigen::VectorXd values;
  std::size_t k1 = 0;
  std::size_t k2 = 0;

  auto old_block() const { return values.head(static_cast<Eigen::Index>(k1)); }
  auto new_block() const { return values.tail(static_cast<Eigen::Index>(k2)); }
};

/// values[i] = sum of f_j over grid points owned by polygon i, accumulated in
/// ascending grid index.
AggregateVector aggregate(const Eigen::VectorXd& f,
                          const geometry::MembershipMatrix& m,
                          double cell_area = 0.0);
AggregateVector aggregate(const priors::MvnSample& f,
                          const geometry::MembershipMatrix& m,
                          double cell_area = 0.0);

/// Transpose action: scatters per-polygon values back onto the grid.
Eigen::VectorXd scatter(const Eigen::VectorXd& per_polygon,
                        const geometry::MembershipMatrix& m);

JointAggregate joint_aggregate(const Eigen::VectorXd& f,
                               const geometry::MembershipMatrix& m_old,
                               const geometry::MembershipMatrix& m_new);
JointAggregate joint_aggregate(const priors::MvnSample& f,
                               const geometry::MembershipMatrix& m_old,
                               const geometry::MembershipMatrix& m_new);

/// Column i holds the i-th joint aggregate draw.
struct TrainingSet {
  Eigen::MatrixXd samples;
  std::size_t k1 = 0;
  std::size_t k2 = 0;
  std::uint64_t root_seed = 0;

  std::size_t count() const { return static_cast<std::size_t>(samples.cols()); }
  std::size_t dim() const { return k1 + k2; }
  JointAggregate at(std::size_t i) const;
};

struct TrainingSetOptions {
  std::size_t count = 1;
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0 = hardware concurrency
};

/// Each draw freshly samples (lengthscale, sigma) from `hp`, draws f on the
/// grid and aggregates it over both partitions. Draw i uses its own stream;
/// the result is independent of the thread count.
TrainingSet generate_training_set(const geometry::Grid& grid,
                                  const geometry::MembershipMatrix& m_old,
                                  const geometry::MembershipMatrix& m_new,
                                  const priors::HyperPriorSpec& hp,
                                  const TrainingSetOptions& options);

/// Binary layout: u64 LE count, K1, K2, root seed; then count rows of
/// (K1 + K2) f64 LE values.
void save_training_set(const std::filesystem::path& path, const TrainingSet& set);
TrainingSet load_training_set(const std::filesystem::path& path);
std::string training_set_to_text(const TrainingSet& set);

}  // namespace aggvae::aggregation
