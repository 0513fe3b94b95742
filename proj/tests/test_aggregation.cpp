#include <doctest.h>

#include <algorithm>
#include <random>

#include "aggvae/aggregation.hpp"
#include "aggvae/error.hpp"
#include "aggvae/priors.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace aggvae;
using namespace aggvae::aggregation;

namespace {

geometry::MembershipMatrix hand_matrix() {
  return geometry::MembershipMatrix::from_text("2 3\n1 1 0\n0 0 1\n", "hand", "g3");
}

// Random valid membership: each column owned by a random row or nobody,
// every row owning at least one column.
geometry::MembershipMatrix random_matrix(std::mt19937_64& rng, std::size_t k, std::size_t n) {
  std::uniform_int_distribution<int> owner(-1, static_cast<int>(k) - 1);
  std::vector<int> o(n);
  for (auto& v : o) v = owner(rng);
  for (std::size_t i = 0; i < k; ++i) o[i] = static_cast<int>(i);
  std::shuffle(o.begin(), o.end(), rng);
  return geometry::MembershipMatrix("rand", "grid", k, o);
}

}  // namespace

TEST_CASE("aggregate hand example and zero vector") {
  const auto m = hand_matrix();
  const Eigen::Vector3d f(1, 2, 3);
  const auto a = aggregate(f, m, 0.25);
  CHECK(a.values == Eigen::Vector2d(3, 3));
  CHECK(a.cell_area == 0.25);
  CHECK(a.scaled() == Eigen::Vector2d(0.75, 0.75));
  CHECK(a.polygon_set_name == "hand");
  CHECK(aggregate(Eigen::Vector3d::Zero(), m).values.isZero(0.0));
  CHECK_THROWS_AS(aggregate(Eigen::Vector4d::Ones(), m), Error);
}

TEST_CASE("aggregate matches a brute-force double loop exactly") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 20; ++rep) {
    const auto m = random_matrix(rng, 7, 100);
    Eigen::VectorXd f(100);
    for (auto& v : f) v = normal(rng);
    const Eigen::VectorXd got = aggregate(f, m).values;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double brute = 0.0;
      for (std::size_t j = 0; j < m.cols(); ++j) {
        if (m.entry(i, j) == 1) brute += f(static_cast<Eigen::Index>(j));
      }
      CHECK(got(static_cast<Eigen::Index>(i)) == brute);
    }
    CHECK(got.isApprox(m.dense() * f, 1e-12));
  }
}

TEST_CASE("aggregate is linear") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal;
  const auto m = random_matrix(rng, 5, 60);
  Eigen::VectorXd f(60), g(60);
  for (auto& v : f) v = normal(rng);
  for (auto& v : g) v = normal(rng);
  const double a = 1.75, b = -0.5;
  const Eigen::VectorXd lhs = aggregate(a * f + b * g, m).values;
  const Eigen::VectorXd rhs = a * aggregate(f, m).values + b * aggregate(g, m).values;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("scatter is the transpose action") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  const auto m = random_matrix(rng, 4, 30);
  Eigen::VectorXd y(4);
  for (auto& v : y) v = normal(rng);
  CHECK(scatter(y, m).isApprox(m.dense().transpose() * y));
}

TEST_CASE("joint aggregate block structure") {
  const auto g = testing::tiled_geometry(6, 1, 2, 1, 3);
  Eigen::VectorXd f = Eigen::VectorXd::LinSpaced(36, -1.0, 2.0);
  const auto j = joint_aggregate(f, g->m_old, g->m_new);
  CHECK(j.k1 == 2);
  CHECK(j.k2 == 3);
  CHECK(j.values.size() == 5);
  CHECK(j.old_block() == aggregate(f, g->m_old).values);
  CHECK(j.new_block() == aggregate(f, g->m_new).values);

  const auto same = joint_aggregate(f, g->m_old, g->m_old);
  CHECK(same.old_block() == same.new_block());

  const auto other = testing::tiled_geometry(7, 1, 2, 1, 3);
  CHECK_THROWS_WITH_AS(joint_aggregate(Eigen::VectorXd::Zero(36), g->m_old, other->m_new),
                       doctest::Contains("different grids"), Error);
}

TEST_CASE("training set determinism, independence from threads, and seed sensitivity") {
  const auto g = testing::tiled_geometry(6, 2, 2, 3, 3);
  const priors::HyperPriorSpec hp;
  TrainingSetOptions o{40, 11, 1};
  const auto a = generate_training_set(g->grid, g->m_old, g->m_new, hp, o);
  o.threads = 3;
  const auto b = generate_training_set(g->grid, g->m_old, g->m_new, hp, o);
  CHECK(a.count() == 40);
  CHECK(a.dim() == 13);
  CHECK(a.samples == b.samples);
  o.seed = 12;
  const auto c = generate_training_set(g->grid, g->m_old, g->m_new, hp, o);
  CHECK(c.samples != a.samples);

  TrainingSetOptions one{1, 5, 1};
  CHECK(generate_training_set(g->grid, g->m_old, g->m_new, hp, one).count() == 1);
  TrainingSetOptions none{0, 5, 1};
  CHECK_THROWS_AS(generate_training_set(g->grid, g->m_old, g->m_new, hp, none), Error);
}

TEST_CASE("each training column is a joint aggregate of one field") {
  // Both partitions tile the whole square: block totals agree for every draw.
  const auto g = testing::tiled_geometry(8, 2, 2, 3, 3);
  TrainingSetOptions o{25, 21, 1};
  const auto set = generate_training_set(g->grid, g->m_old, g->m_new, {}, o);
  for (std::size_t i = 0; i < set.count(); ++i) {
    const auto j = set.at(i);
    CHECK(j.old_block().sum() == doctest::Approx(j.new_block().sum()).epsilon(1e-10));
  }
}

TEST_CASE("10^4 training draws have zero mean") {
  const auto g = testing::tiled_geometry(6, 2, 2, 3, 3);
  TrainingSetOptions o{10000, 31, 0};
  const auto set = generate_training_set(g->grid, g->m_old, g->m_new, {}, o);
  const Eigen::VectorXd mean = set.samples.rowwise().mean();
  const Eigen::MatrixXd centred = set.samples.colwise() - mean;
  const Eigen::VectorXd sd =
      (centred.array().square().rowwise().sum() / (set.count() - 1.0)).sqrt();
  for (Eigen::Index i = 0; i < mean.size(); ++i) CHECK(std::abs(mean(i)) < 4.0 * sd(i) / 100.0);
}

TEST_CASE("aggregate covariance converges to M Sigma M^T") {
  const auto g = testing::tiled_geometry(4, 1, 2, 2, 2);
  const priors::KernelSpec k{1.0, 0.5};
  const Eigen::MatrixXd cov = priors::rbf_covariance(g->grid, k);
  Eigen::MatrixXd m(6, 16);
  m << g->m_old.dense(), g->m_new.dense();
  const Eigen::MatrixXd expected = m * cov * m.transpose();
  const int n = 20000;
  Eigen::MatrixXd draws(6, n);
  for (int i = 0; i < n; ++i) {
    const auto f = priors::sample_mvn_cov(cov, derive_seed(8, Stream::kReference, i));
    draws.col(i) = joint_aggregate(f, g->m_old, g->m_new).values;
  }
  const Eigen::MatrixXd centred = draws.colwise() - draws.rowwise().mean();
  const Eigen::MatrixXd emp = centred * centred.transpose() / (n - 1.0);
  // Relative to the scale of the largest entry; MC error is about 2%.
  CHECK((emp - expected).cwiseAbs().maxCoeff() < 0.05 * expected.cwiseAbs().maxCoeff());
}

TEST_CASE("training set binary and text round trip") {
  const auto g = testing::tiled_geometry(5, 1, 2, 1, 3);
  TrainingSetOptions o{6, 2, 1};
  const auto set = generate_training_set(g->grid, g->m_old, g->m_new, {}, o);
  const auto dir = testing::scratch_dir("training_set");
  save_training_set(dir / "t.bin", set);
  const auto back = load_training_set(dir / "t.bin");
  CHECK(back.samples == set.samples);
  CHECK(back.k1 == 2);
  CHECK(back.k2 == 3);
  CHECK(back.root_seed == 2);
  CHECK(std::filesystem::file_size(dir / "t.bin") == 4 * 8 + 6 * 5 * 8);
  const std::string text = training_set_to_text(set);
  CHECK(std::count(text.begin(), text.end(), '\n') >= 6);
  CHECK_THROWS_AS(load_training_set(dir / "missing.bin"), Error);
}
