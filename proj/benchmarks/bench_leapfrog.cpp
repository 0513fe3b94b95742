#include <benchmark/benchmark.h>

#include <memory>
#include <random>

#include "aggvae/geometry.hpp"
#include "aggvae/models.hpp"
#include "aggvae/synth.hpp"
#include "aggvae/vae.hpp"

namespace {

using namespace aggvae;

inference::PrevalenceData flat_data(std::size_t k) {
  inference::PrevalenceData d;
  for (std::size_t i = 0; i < k; ++i) {
    d.labels.push_back("u" + std::to_string(i));
    d.n_tests.push_back(1000);
    d.n_pos.push_back(300);
  }
  return d;
}

// 2x2 old and 3x3 new partitions of the unit square at the given resolution.
inference::ModelSpec gp_spec(int resolution) {
  const auto parts = synth::make_partitions(2, 2, 3, 3, {0.0, 0.0, 1.0, 1.0});
  auto geo = std::make_shared<inference::GeometryHandles>();
  geo->grid = geometry::build_grid({0.0, 0.0, 1.0, 1.0}, resolution);
  geo->m_old = geometry::membership_matrix(geo->grid, parts.old_set);
  geo->m_new = geometry::membership_matrix(geo->grid, parts.new_set);
  inference::ModelSpec spec;
  spec.kind = inference::ModelKind::kAggGp;
  spec.geometry = geo;
  spec.data_old = flat_data(4);
  spec.data_new = flat_data(9);
  return spec;
}

inference::ModelSpec vae_spec() {
  Engine engine(3);
  auto w = std::make_shared<vae::DecoderWeights>();
  const auto arch = vae::VaeArchitecture::defaults(13);
  w->decoder = vae::Mlp::glorot(arch.decoder_spec(13), engine);
  w->k1 = 4;
  w->k2 = 9;
  w->standardization.mean = Eigen::VectorXd::Zero(13);
  w->standardization.scale = Eigen::VectorXd::Ones(13);
  inference::ModelSpec spec;
  spec.kind = inference::ModelKind::kAggVae;
  spec.decoder = w;
  spec.data_old = flat_data(4);
  spec.data_new = flat_data(9);
  return spec;
}

void gradient_loop(benchmark::State& state, const inference::LogDensity& model) {
  Engine engine(1);
  Eigen::VectorXd x = model.initial_point(engine);
  Eigen::VectorXd grad(x.size());
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.log_density(x, &grad));
    x += 1e-9 * grad;
  }
}

void BM_AggGpGradient(benchmark::State& state) {
  const inference::AggGpModel model(gp_spec(static_cast<int>(state.range(0))));
  gradient_loop(state, model);
  state.counters["grid_points"] = static_cast<double>(model.spec().geometry->grid.size());
}
BENCHMARK(BM_AggGpGradient)->Arg(12)->Arg(24)->Unit(benchmark::kMillisecond);

void BM_AggVaeGradient(benchmark::State& state) {
  const inference::AggVaeModel model(vae_spec());
  gradient_loop(state, model);
}
BENCHMARK(BM_AggVaeGradient)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
