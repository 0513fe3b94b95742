#include "aggvae/synth.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "aggvae/aggregation.hpp"
#include "aggvae/error.hpp"
#include "aggvae/rng.hpp"

namespace aggvae::synth {

namespace {

geometry::PolygonSet tiling(int rows, int cols, const geometry::BoundingBox& e,
                            const std::string& name) {
  geometry::PolygonSet set;
  set.name = name;
  const double w = e.width() / cols;
  const double h = e.height() / rows;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      // Outer edges snap to the extent.
      const double x0 = c == 0 ? e.xmin : e.xmin + c * w;
      const double x1 = c == cols - 1 ? e.xmax : e.xmin + (c + 1) * w;
      const double y0 = r == 0 ? e.ymin : e.ymin + r * h;
      const double y1 = r == rows - 1 ? e.ymax : e.ymin + (r + 1) * h;
      set.polygons.push_back({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}});
      set.labels.push_back(name + "-r" + std::to_string(r) + "c" + std::to_string(c));
    }
  }
  return set;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

Partitions make_partitions(int rows_old, int cols_old, int rows_new, int cols_new,
                           const geometry::BoundingBox& extent) {
  if (rows_old < 1 || cols_old < 1 || rows_new < 1 || cols_new < 1) {
    throw Error("partition row and column counts must be at least 1");
  }
  if (!(extent.width() > 0.0) || !(extent.height() > 0.0)) {
    throw Error("partition extent has zero area");
  }
  Partitions p;
  p.old_set = tiling(rows_old, cols_old, extent, "old");
  p.new_set = tiling(rows_new, cols_new, extent, "new");
  if (rows_old == rows_new && cols_old == cols_new) {
    p.warnings.push_back("old and new tilings are identical (" + std::to_string(rows_old) + "x" +
                         std::to_string(cols_old) + "); boundaries do not change");
  }
  return p;
}

void ScenarioParams::validate() const {
  if (tests_per_unit < 1) throw Error("tests_per_unit must be at least 1");
  if (grid_resolution < 2) throw Error("grid resolution must be at least 2");
  if (!(test_skew >= 0.0)) throw Error("test_skew must be non-negative");
  if (!truth.zero_field) truth.kernel.validate();
}

Scenario simulate_counts(const ScenarioParams& params, std::uint64_t seed) {
  params.validate();
  Scenario s;
  s.params = params;
  s.seed = seed;
  auto parts = make_partitions(params.rows_old, params.cols_old, params.rows_new,
                               params.cols_new, params.extent);
  s.polygons_old = std::move(parts.old_set);
  s.polygons_new = std::move(parts.new_set);
  s.warnings = std::move(parts.warnings);
  s.grid = geometry::build_grid(params.extent, params.grid_resolution);
  s.m_old = geometry::membership_matrix(s.grid, s.polygons_old);
  s.m_new = geometry::membership_matrix(s.grid, s.polygons_new);

  const auto n = static_cast<Eigen::Index>(s.grid.size());
  if (params.truth.zero_field) {
    s.field = Eigen::VectorXd::Zero(n);
  } else {
    const auto cov = priors::rbf_covariance(s.grid, params.truth.kernel);
    s.field = priors::sample_mvn_cov(cov, derive_seed(seed, Stream::kTruthField)).values;
  }

  const double c = s.grid.cell_area();
  auto theta = [&](const geometry::MembershipMatrix& m) {
    const Eigen::VectorXd agg = aggregation::aggregate(s.field, m).values;
    Eigen::VectorXd t(agg.size());
    for (Eigen::Index i = 0; i < agg.size(); ++i) {
      t(i) = inference::logistic(params.truth.b0 + c * agg(i));
    }
    return t;
  };
  s.theta_old = theta(s.m_old);
  s.theta_new = theta(s.m_new);

  auto counts = [&](const Eigen::VectorXd& t, const geometry::PolygonSet& set,
                    std::uint64_t index) {
    Engine engine = make_engine(seed, Stream::kCounts, index);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    inference::PrevalenceData d;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      double tests = static_cast<double>(params.tests_per_unit);
      if (params.test_skew > 0.0) tests *= std::exp(params.test_skew * unit(engine));
      const auto n_tests = std::max<std::int64_t>(1, std::llround(tests));
      std::binomial_distribution<std::int64_t> binom(n_tests, t(i));
      d.labels.push_back(set.labels[static_cast<std::size_t>(i)]);
      d.n_tests.push_back(n_tests);
      d.n_pos.push_back(binom(engine));
    }
    return d;
  };
  s.data_old = counts(s.theta_old, s.polygons_old, 0);
  s.data_new = counts(s.theta_new, s.polygons_new, 1);

  s.provenance = {
      {"seed", std::to_string(seed)},
      {"partition_old", std::to_string(params.rows_old) + "x" + std::to_string(params.cols_old)},
      {"partition_new", std::to_string(params.rows_new) + "x" + std::to_string(params.cols_new)},
      {"extent", fmt(params.extent.xmin) + "," + fmt(params.extent.ymin) + "," +
                     fmt(params.extent.xmax) + "," + fmt(params.extent.ymax)},
      {"grid", s.grid.id()},
      {"b0_true", fmt(params.truth.b0)},
      {"variance_true", fmt(params.truth.kernel.variance)},
      {"lengthscale_true", fmt(params.truth.kernel.lengthscale)},
      {"zero_field", params.truth.zero_field ? "true" : "false"},
      {"tests_per_unit", std::to_string(params.tests_per_unit)},
      {"test_skew", fmt(params.test_skew)},
  };
  return s;
}

std::string truth_to_csv(const Scenario& scenario, const std::string& comment) {
  std::ostringstream out;
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "era,unit,theta\n";
  char buf[40];
  auto rows = [&](const char* era, const geometry::PolygonSet& set, const Eigen::VectorXd& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", t(i));
      out << era << ',' << set.labels[static_cast<std::size_t>(i)] << ',' << buf << '\n';
    }
  };
  rows("old", scenario.polygons_old, scenario.theta_old);
  rows("new", scenario.polygons_new, scenario.theta_new);
  return out.str();
}

}  // namespace aggvae::synth
