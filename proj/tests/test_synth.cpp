#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "aggvae/error.hpp"
#include "aggvae/geometry.hpp"
#include "aggvae/prevalence.hpp"
#include "aggvae/synth.hpp"

using namespace aggvae;
using namespace aggvae::synth;

TEST_CASE("partitions: counts, equal areas, and tiling") {
  const geometry::BoundingBox box{0, 0, 1, 1};
  const auto p = make_partitions(2, 2, 3, 3, box);
  CHECK(p.old_set.size() == 4);
  CHECK(p.new_set.size() == 9);
  CHECK(p.warnings.empty());
  double old_area = 0.0, new_area = 0.0;
  for (const auto& r : p.old_set.polygons) old_area += geometry::ring_area(r);
  for (const auto& r : p.new_set.polygons) {
    CHECK(geometry::ring_area(r) == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
    new_area += geometry::ring_area(r);
  }
  CHECK(std::abs(old_area - 1.0) < 1e-10);
  CHECK(std::abs(new_area - 1.0) < 1e-10);
  CHECK(p.old_set.labels.front() == "old-r0c0");
  CHECK(p.new_set.labels.back() == "new-r2c2");

  const geometry::BoundingBox wide{-2, 1, 4, 4};
  const auto q = make_partitions(1, 3, 2, 5, wide);
  double area = 0.0;
  for (const auto& r : q.new_set.polygons) area += geometry::ring_area(r);
  CHECK(std::abs(area - 18.0) < 1e-10);
  const auto bb = geometry::bounding_box(q.old_set, q.new_set);
  CHECK(bb.xmin == -2.0);
  CHECK(bb.ymax == 4.0);
}

TEST_CASE("identical tilings warn rather than fail") {
  const auto p = make_partitions(2, 2, 2, 2, {0, 0, 1, 1});
  CHECK(p.warnings.size() == 1);
  CHECK_THROWS_AS(make_partitions(0, 2, 2, 2, {0, 0, 1, 1}), Error);
}

TEST_CASE("zero field with zero intercept gives theta one half") {
  ScenarioParams params;
  params.truth.b0 = 0.0;
  params.truth.zero_field = true;
  params.tests_per_unit = 2000;
  const Scenario s = simulate_counts(params, 4);
  CHECK(s.field.isZero(0.0));
  for (double t : s.theta_old) CHECK(t == 0.5);
  for (double t : s.theta_new) CHECK(t == 0.5);
  std::int64_t pos = 0, tests = 0;
  for (const auto* d : {&s.data_old, &s.data_new}) {
    for (std::size_t i = 0; i < d->size(); ++i) {
      pos += d->n_pos[i];
      tests += d->n_tests[i];
    }
  }
  const double rate = static_cast<double>(pos) / static_cast<double>(tests);
  CHECK(std::abs(rate - 0.5) < 4.0 * std::sqrt(0.25 / static_cast<double>(tests)));
}

TEST_CASE("fixed seed reproduces the scenario") {
  const ScenarioParams params;
  const Scenario a = simulate_counts(params, 9);
  const Scenario b = simulate_counts(params, 9);
  CHECK(a.field == b.field);
  CHECK(a.data_old.n_pos == b.data_old.n_pos);
  CHECK(a.data_new.n_pos == b.data_new.n_pos);
  CHECK(truth_to_csv(a) == truth_to_csv(b));
  CHECK(a.provenance == b.provenance);
  const Scenario c = simulate_counts(params, 10);
  CHECK(c.field != a.field);
}

TEST_CASE("both partitions share one surface") {
  ScenarioParams p1;
  ScenarioParams p2 = p1;
  p2.rows_new = 4;
  p2.cols_new = 5;
  const Scenario a = simulate_counts(p1, 21);
  const Scenario b = simulate_counts(p2, 21);
  CHECK(a.field == b.field);
  CHECK(a.theta_old == b.theta_old);

  // Summed field contributions over each era equal c times the grid total.
  const double b0 = p1.truth.b0;
  auto field_total = [b0](const Eigen::VectorXd& t) {
    return ((t.array() / (1.0 - t.array())).log() - b0).sum();
  };
  const double total = a.grid.cell_area() * a.field.sum();
  CHECK(field_total(a.theta_old) == doctest::Approx(total).epsilon(1e-8));
  CHECK(field_total(a.theta_new) == doctest::Approx(total).epsilon(1e-8));

  // Equal-area units: mean true prevalence agrees up to quadrature error.
  CHECK(std::abs(a.theta_old.mean() - a.theta_new.mean()) < 0.01);
}

TEST_CASE("counts respect bounds and the binomial interval around truth") {
  ScenarioParams params;
  params.truth.kernel = {1.0, 0.3};
  int within = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Scenario s = simulate_counts(params, seed);
    auto check = [&](const inference::PrevalenceData& d, const Eigen::VectorXd& theta) {
      for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(d.n_pos[i] >= 0);
        CHECK(d.n_pos[i] <= d.n_tests[i]);
        const double t = theta(static_cast<Eigen::Index>(i));
        const double n = static_cast<double>(d.n_tests[i]);
        const double crude = static_cast<double>(d.n_pos[i]) / n;
        within += std::abs(crude - t) <= 2.0 * std::sqrt(t * (1.0 - t) / n);
        ++total;
      }
    };
    check(s.data_old, s.theta_old);
    check(s.data_new, s.theta_new);
  }
  CHECK(total == 40 * 13);
  CHECK(static_cast<double>(within) / total >= 0.93);
}

TEST_CASE("test skew varies the number of tests per unit") {
  ScenarioParams params;
  params.test_skew = 1.0;
  const Scenario s = simulate_counts(params, 2);
  const auto [lo, hi] = std::minmax_element(s.data_new.n_tests.begin(), s.data_new.n_tests.end());
  CHECK(*lo < *hi);
  for (auto n : s.data_new.n_tests) {
    CHECK(n >= 367);
    CHECK(n <= 2719);
  }
  params.test_skew = -1.0;
  CHECK_THROWS_AS(simulate_counts(params, 2), Error);
  params.test_skew = 0.0;
  params.tests_per_unit = 0;
  CHECK_THROWS_AS(simulate_counts(params, 2), Error);
}

TEST_CASE("scenario outputs serialize with labels and provenance") {
  const Scenario s = simulate_counts(ScenarioParams{}, 3);
  const std::string truth = truth_to_csv(s, "seed=3");
  CHECK(truth.rfind("# seed=3\n", 0) == 0);
  CHECK(truth.find("era,unit,theta\n") != std::string::npos);
  CHECK(truth.find("old,old-r1c1,") != std::string::npos);
  CHECK(truth.find("new,new-r2c2,") != std::string::npos);
  const auto back = inference::parse_prevalence_csv(inference::prevalence_to_csv(s.data_new, "x"));
  CHECK(back.labels == s.data_new.labels);
  CHECK(back.n_pos == s.data_new.n_pos);
  CHECK(s.provenance.at("seed") == "3");
  CHECK(s.provenance.at("partition_new") == "3x3");
}
