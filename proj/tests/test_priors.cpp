#include <doctest.h>

#include <cmath>
#include <numbers>

#include "aggvae/error.hpp"
#include "aggvae/geometry.hpp"
#include "aggvae/priors.hpp"
#include "aggvae/rng.hpp"

using namespace aggvae;
using namespace aggvae::priors;

namespace {

geometry::Grid unit_grid(int resolution) {
  return geometry::build_grid(geometry::BoundingBox{0, 0, 1, 1}, resolution);
}

Eigen::MatrixXd path_adjacency(int k) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i + 1 < k; ++i) a(i, i + 1) = a(i + 1, i) = 1.0;
  return a;
}

Eigen::MatrixXd empirical_covariance(const Eigen::MatrixXd& draws) {
  const Eigen::VectorXd mean = draws.rowwise().mean();
  const Eigen::MatrixXd centred = draws.colwise() - mean;
  return centred * centred.transpose() / static_cast<double>(draws.cols() - 1);
}

}  // namespace

TEST_CASE("rbf covariance entries") {
  const auto g = unit_grid(4);
  const auto cov = rbf_covariance(g, {2.5, 0.3});
  CHECK(cov.rows() == 16);
  CHECK(cov.isApprox(cov.transpose(), 0.0));
  for (Eigen::Index i = 0; i < cov.rows(); ++i) CHECK(cov(i, i) == 2.5);

  Eigen::MatrixXd d2(2, 2);
  d2 << 0.0, 2.0, 2.0, 0.0;
  const auto c = rbf_covariance(d2, {1.0, 1.0});
  CHECK(c(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(c(0, 1) == doctest::Approx(0.3679).epsilon(1e-4));

  const auto flat = rbf_covariance(g, {1.7, 1e6});
  CHECK((flat.array() - 1.7).abs().maxCoeff() < 1e-6);
}

TEST_CASE("rbf covariance is positive semi-definite on random grids") {
  Engine rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    geometry::Grid g;
    const int n = 20 + 8 * rep;
    for (int i = 0; i < n; ++i) g.points.push_back({u(rng), u(rng)});
    const KernelSpec k{0.5 + u(rng), 0.05 + u(rng)};
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(rbf_covariance(g, k));
    CHECK(es.eigenvalues().minCoeff() >= -1e-8 * k.variance);
  }
}

TEST_CASE("kernel validation") {
  CHECK_THROWS_AS(rbf_covariance(unit_grid(2), {0.0, 1.0}), Error);
  CHECK_THROWS_AS(rbf_covariance(unit_grid(2), {1.0, -1.0}), Error);
  CHECK_THROWS_AS(rbf_covariance(unit_grid(2), {1.0, std::nan("")}), Error);
}

TEST_CASE("iCAR on a 3-node path") {
  PrecisionSpec s;
  s.family = CarFamily::kIcar;
  s.adjacency = path_adjacency(3);
  Eigen::MatrixXd expected(3, 3);
  expected << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  const auto q = car_precision(s);
  CHECK(q == expected);
  CHECK((q * Eigen::VectorXd::Ones(3)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("iCAR annihilates constants on a random connected graph") {
  Engine rng(3);
  std::bernoulli_distribution edge(0.3);
  Eigen::MatrixXd a = path_adjacency(12);
  for (int i = 0; i < 12; ++i) {
    for (int j = i + 2; j < 12; ++j) {
      if (edge(rng)) a(i, j) = a(j, i) = 1.0;
    }
  }
  PrecisionSpec s{CarFamily::kIcar, a, 2.0};
  const auto q = car_precision(s);
  CHECK((q * Eigen::VectorXd::Ones(12)).cwiseAbs().maxCoeff() <= 1e-12);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q);
  CHECK(std::abs(es.eigenvalues()(0)) < 1e-10);
  CHECK(es.eigenvalues()(1) > 1e-6);  // one-dimensional null space
}

TEST_CASE("CAR family formulas") {
  const Eigen::MatrixXd a = path_adjacency(4);
  const Eigen::MatrixXd d = a.rowwise().sum().asDiagonal();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(4, 4);

  PrecisionSpec s;
  s.adjacency = a;
  s.tau = 1.0;
  s.alpha = 0.0;
  s.family = CarFamily::kLcar;
  CHECK(car_precision(s) == id);

  s.tau = 3.0;
  s.alpha = 0.4;
  s.family = CarFamily::kCar;
  CHECK(car_precision(s).isApprox(3.0 * (id - 0.4 * a)));
  s.family = CarFamily::kPcar;
  CHECK(car_precision(s).isApprox(3.0 * (d - 0.4 * a)));
  s.family = CarFamily::kLcar;
  CHECK(car_precision(s).isApprox(3.0 * (0.4 * (d - a) + 0.6 * id)));
  for (auto f : {CarFamily::kCar, CarFamily::kPcar, CarFamily::kLcar}) {
    s.family = f;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(car_precision(s));
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }

  s.family = CarFamily::kBym;
  s.tau_s = 2.0;
  s.tau_iid = 4.0;
  CHECK(car_precision(s).isApprox(0.5 * (d - a) + 0.25 * id));
}

TEST_CASE("CAR input validation") {
  PrecisionSpec s;
  s.family = CarFamily::kCar;
  s.adjacency = path_adjacency(3);
  s.alpha = 1.0;
  CHECK_THROWS_AS(car_precision(s), Error);
  s.alpha = -0.1;
  CHECK_THROWS_AS(car_precision(s), Error);
  s.alpha = 0.5;
  s.adjacency(0, 2) = 1.0;  // breaks symmetry
  CHECK_THROWS_WITH_AS(car_precision(s), doctest::Contains("symmetric"), Error);
  s.adjacency = path_adjacency(3);
  s.adjacency(1, 1) = 1.0;
  CHECK_THROWS_AS(car_precision(s), Error);
}

TEST_CASE("sample_mvn_cov is L times the seeded standard normal draw") {
  const std::uint64_t seed = 99;
  Engine e = make_engine(seed, Stream::kMvn);
  const Eigen::VectorXd eps = standard_normal(2, e);

  const auto a = sample_mvn_cov(Eigen::MatrixXd::Identity(2, 2), seed);
  CHECK(a.seed == seed);
  CHECK((a.values - eps).cwiseAbs().maxCoeff() < 1e-7);

  const auto b = sample_mvn_cov(4.0 * Eigen::MatrixXd::Identity(2, 2), seed);
  CHECK((b.values - 2.0 * eps).cwiseAbs().maxCoeff() < 1e-7);

  const auto c = sample_mvn_cov(Eigen::MatrixXd::Identity(2, 2), seed);
  CHECK(c.values == a.values);
  CHECK(sample_mvn_cov(Eigen::MatrixXd::Identity(2, 2), seed + 1).values != a.values);
}

TEST_CASE("sample_mvn_cov empirical moments on a 2x2 grid") {
  const auto cov = rbf_covariance(unit_grid(2), {1.0, 0.4});
  const int n = 20000;
  Eigen::MatrixXd draws(4, n);
  for (int i = 0; i < n; ++i) {
    draws.col(i) = sample_mvn_cov(cov, derive_seed(1234, Stream::kReference, i)).values;
  }
  CHECK((empirical_covariance(draws) - cov).cwiseAbs().maxCoeff() < 0.05);
  const Eigen::VectorXd mean = draws.rowwise().mean();
  CHECK(mean.cwiseAbs().maxCoeff() < 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("jittered Cholesky reconstructs and escalates") {
  const auto cov = rbf_covariance(unit_grid(6), {1.0, 0.3});
  const auto chol = jittered_cholesky(cov);
  Eigen::MatrixXd shifted = cov;
  shifted.diagonal().array() += chol.jitter;
  CHECK((chol.lower * chol.lower.transpose() - shifted).norm() / shifted.norm() < 1e-10);

  // Rank-one covariance needs more than the starting jitter.
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(5, 5);
  const auto r = jittered_cholesky(ones, 1e-20);
  CHECK(r.jitter > 1e-20);
  CHECK(r.jitter <= 1e-4);

  Eigen::MatrixXd indefinite(2, 2);
  indefinite << 1, 2, 2, 1;
  CHECK_THROWS_WITH_AS(jittered_cholesky(indefinite), doctest::Contains("final jitter"), Error);
  Eigen::MatrixXd asym(2, 2);
  asym << 1, 0.5, 0.1, 1;
  CHECK_THROWS_AS(sample_mvn_cov(asym, 1), Error);
}

TEST_CASE("hyperparameter draws match prior means") {
  const HyperPriorSpec hp;
  Engine e(17);
  const int n = 100000;
  double sum_l = 0.0, sum_l2 = 0.0, sum_s = 0.0, sum_s2 = 0.0;
  bool positive = true;
  for (int i = 0; i < n; ++i) {
    const KernelSpec k = sample_hyperparameters(hp, e);
    positive = positive && k.lengthscale > 0.0 && k.variance > 0.0;
    sum_l += k.lengthscale;
    sum_l2 += k.lengthscale * k.lengthscale;
    sum_s += k.sigma();
    sum_s2 += k.variance;
  }
  CHECK(positive);
  const double mean_l = sum_l / n;
  const double se_l = std::sqrt((sum_l2 / n - mean_l * mean_l) / n);
  CHECK(std::abs(mean_l - 1.5) < 3.0 * se_l);
  const double mean_s = sum_s / n;
  const double se_s = std::sqrt((sum_s2 / n - mean_s * mean_s) / n);
  const double expected_s = 0.05 * std::sqrt(2.0 / std::numbers::pi);
  CHECK(expected_s == doctest::Approx(0.0399).epsilon(1e-3));
  CHECK(std::abs(mean_s - expected_s) < 3.0 * se_s);

  CHECK(sample_hyperparameters(hp, 5).lengthscale == sample_hyperparameters(hp, 5).lengthscale);
}

TEST_CASE("hyperprior log densities against high-precision values") {
  // Reference values computed independently with 30-digit arithmetic.
  CHECK(log_inverse_gamma(0.75, 3.0, 3.0) ==
        doctest::Approx(-0.246582024748492525).epsilon(1e-13));
  CHECK(log_inverse_gamma(2.5, 3.0, 3.0) ==
        doctest::Approx(-2.26247324205223649).epsilon(1e-13));
  CHECK(log_half_normal(0.03, 0.05) == doctest::Approx(2.58994092090926356).epsilon(1e-13));

  const HyperPriorSpec hp;
  CHECK(log_density_hyperpriors(0.75, 0.03, hp) ==
        doctest::Approx(-0.246582024748492525 + 2.58994092090926356).epsilon(1e-13));
  CHECK(log_density_hyperpriors(KernelSpec{0.03 * 0.03, 0.75}, hp) ==
        doctest::Approx(-0.246582024748492525 + 2.58994092090926356).epsilon(1e-12));

  CHECK(std::isinf(log_density_hyperpriors(0.75, -1.0, hp)));
  CHECK(std::isinf(log_density_hyperpriors(0.0, 0.03, hp)));
  CHECK(std::isinf(log_density_hyperpriors(-1.0, 0.03, hp)));
}

TEST_CASE("hyperprior densities integrate to one") {
  // Composite Simpson on (0, 50) for the lengthscale and (0, 1) for sigma.
  auto simpson = [](auto f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
  };
  const double ig = simpson(
      [](double x) { return x > 0.0 ? std::exp(log_inverse_gamma(x, 3.0, 3.0)) : 0.0; }, 0.0,
      50.0, 200000);
  // Closed-form upper tail beyond 50.
  const double tail = 1.0 - std::exp(-3.0 / 50.0) * (1.0 + 3.0 / 50.0 + 0.5 * std::pow(3.0 / 50.0, 2));
  CHECK(std::abs(ig + tail - 1.0) < 1e-3);
  CHECK(std::abs(ig - 1.0) < 1e-3);
  const double hn =
      simpson([](double x) { return std::exp(log_half_normal(x, 0.05)); }, 0.0, 1.0, 20000);
  CHECK(std::abs(hn - 1.0) < 1e-3);
}
