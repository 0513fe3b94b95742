#include "aggvae/priors.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "aggvae/error.hpp"

namespace aggvae::priors {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double KernelSpec::sigma() const { return std::sqrt(variance); }

void KernelSpec::validate() const {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw Error("kernel variance must be positive and finite");
  }
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale)) {
    throw Error("kernel lengthscale must be positive and finite");
  }
}

void HyperPriorSpec::validate() const {
  if (!(lengthscale_shape > 1.0)) throw Error("lengthscale prior shape must exceed 1");
  if (!(lengthscale_scale > 0.0)) throw Error("lengthscale prior scale must be positive");
  if (!(sigma_scale > 0.0)) throw Error("sigma prior scale must be positive");
}

Eigen::MatrixXd squared_distances(const geometry::Grid& grid) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd d2(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& pj = grid.points[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& pi = grid.points[static_cast<std::size_t>(i)];
      const double ddx = pi.x - pj.x;
      const double ddy = pi.y - pj.y;
      d2(i, j) = ddx * ddx + ddy * ddy;
    }
  }
  return d2;
}

Eigen::MatrixXd rbf_covariance(const Eigen::MatrixXd& squared_distances,
                               const KernelSpec& kernel) {
  kernel.validate();
  const double scale = -0.5 / (kernel.lengthscale * kernel.lengthscale);
  return kernel.variance * (squared_distances.array() * scale).exp().matrix();
}

Eigen::MatrixXd rbf_covariance(const geometry::Grid& grid, const KernelSpec& kernel) {
  if (grid.size() == 0) throw Error("rbf_covariance: empty grid");
  return rbf_covariance(squared_distances(grid), kernel);
}

Eigen::MatrixXd car_precision(const PrecisionSpec& spec) {
  const Eigen::MatrixXd& a = spec.adjacency;
  if (a.rows() != a.cols() || a.rows() == 0) throw Error("adjacency must be square and nonempty");
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (a(i, i) != 0.0) throw Error("adjacency must have a zero diagonal");
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (a(i, j) != 0.0 && a(i, j) != 1.0) throw Error("adjacency entries must be 0/1");
      if (a(i, j) != a(j, i)) throw Error("adjacency must be symmetric");
    }
  }
  const auto k = a.rows();
  const Eigen::MatrixXd d = a.rowwise().sum().asDiagonal();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(k, k);
  auto need_alpha = [&] {
    if (!(spec.alpha >= 0.0 && spec.alpha < 1.0)) {
      throw Error("alpha must lie in [0, 1)");
    }
  };
  auto need_positive = [](double v, const char* what) {
    if (!(v > 0.0)) throw Error(std::string(what) + " must be positive");
  };
  switch (spec.family) {
    case CarFamily::kCar:
      need_alpha();
      need_positive(spec.tau, "tau");
      return spec.tau * (id - spec.alpha * a);
    case CarFamily::kIcar:
      need_positive(spec.tau, "tau");
      return spec.tau * (d - a);
    case CarFamily::kPcar:
      need_alpha();
      need_positive(spec.tau, "tau");
      return spec.tau * (d - spec.alpha * a);
    case CarFamily::kLcar:
      need_alpha();
      need_positive(spec.tau, "tau");
      return spec.tau * (spec.alpha * (d - a) + (1.0 - spec.alpha) * id);
    case CarFamily::kBym:
      need_positive(spec.tau_s, "tau_s");
      need_positive(spec.tau_iid, "tau_iid");
      return (1.0 / spec.tau_s) * (d - a) + (1.0 / spec.tau_iid) * id;
  }
  throw Error("unknown CAR family");
}

JitteredCholesky jittered_cholesky(const Eigen::MatrixXd& cov,
                                   std::optional<double> initial_jitter) {
  if (cov.rows() != cov.cols()) throw Error("covariance must be square");
  const double mean_diag = cov.diagonal().mean();
  const double ceiling = 1e-4 * mean_diag;
  double jitter = initial_jitter.value_or(1e-8 * mean_diag);
  const auto n = cov.rows();
  for (;;) {
    Eigen::MatrixXd shifted = cov;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().allFinite()) {
      return {llt.matrixL().toDenseMatrix(), jitter};
    }
    if (jitter >= ceiling || n == 0) {
      throw Error("Cholesky failed after jitter escalation (final jitter " +
                  std::to_string(jitter) + ")");
    }
    jitter = std::min(jitter * 10.0, ceiling);
  }
}

Eigen::VectorXd standard_normal(Eigen::Index n, Engine& engine) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd eps(n);
  for (Eigen::Index i = 0; i < n; ++i) eps(i) = normal(engine);
  return eps;
}

MvnSample sample_mvn_cov(const Eigen::MatrixXd& cov, std::uint64_t seed,
                         std::optional<double> jitter) {
  if (!cov.isApprox(cov.transpose(), 1e-12)) throw Error("covariance must be symmetric");
  const JitteredCholesky chol = jittered_cholesky(cov, jitter);
  Engine engine = make_engine(seed, Stream::kMvn);
  const Eigen::VectorXd eps = standard_normal(cov.rows(), engine);
  return {chol.lower * eps, seed};
}

KernelSpec sample_hyperparameters(const HyperPriorSpec& hp, Engine& engine) {
  hp.validate();
  std::gamma_distribution<double> gamma(hp.lengthscale_shape, 1.0);
  std::normal_distribution<double> normal(0.0, hp.sigma_scale);
  double g = 0.0;
  do {
    g = gamma(engine);
  } while (!(g > 0.0));
  double sigma = 0.0;
  do {
    sigma = std::abs(normal(engine));
  } while (!(sigma > 0.0));
  return {sigma * sigma, hp.lengthscale_scale / g};
}

KernelSpec sample_hyperparameters(const HyperPriorSpec& hp, std::uint64_t seed) {
  Engine engine = make_engine(seed, Stream::kHyperparameters);
  return sample_hyperparameters(hp, engine);
}

double log_inverse_gamma(double x, double shape, double scale) {
  if (!(x > 0.0) || !std::isfinite(x)) return kNegInf;
  return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) -
         scale / x;
}

double log_half_normal(double x, double scale) {
  if (!(x >= 0.0) || !std::isfinite(x)) return kNegInf;
  return std::log(2.0) - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(scale) -
         0.5 * (x / scale) * (x / scale);
}

double log_normal(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sd) - 0.5 * z * z;
}

double log_density_hyperpriors(double lengthscale, double sigma,
                               const HyperPriorSpec& hp) {
  if (!(lengthscale > 0.0) || !(sigma > 0.0)) return kNegInf;
  return log_inverse_gamma(lengthscale, hp.lengthscale_shape, hp.lengthscale_scale) +
         log_half_normal(sigma, hp.sigma_scale);
}

double log_density_hyperpriors(const KernelSpec& kernel, const HyperPriorSpec& hp) {
  if (!(kernel.variance > 0.0)) return kNegInf;
  return log_density_hyperpriors(kernel.lengthscale, kernel.sigma(), hp);
}

}  // namespace aggvae::priors
