#pragma once

#include <memory>
#include <random>

#include "aggvae/geometry.hpp"
#include "aggvae/models.hpp"
#include "aggvae/prevalence.hpp"
#include "aggvae/rng.hpp"
#include "aggvae/synth.hpp"
#include "aggvae/vae.hpp"

namespace aggvae::testing {

/// Decoder with random weights and biases and a non-trivial standardization.
inline std::shared_ptr<vae::DecoderWeights> random_decoder(std::size_t k1, std::size_t k2,
                                                           int latent, std::uint64_t seed) {
  Engine engine(seed);
  const int out = static_cast<int>(k1 + k2);
  auto w = std::make_shared<vae::DecoderWeights>();
  w->decoder = vae::Mlp::glorot({{latent, 6, 5, out}, vae::Activation::kTanh}, engine);
  std::normal_distribution<double> normal(0.0, 0.5);
  Eigen::VectorXd flat = w->decoder.flatten();
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) += normal(engine);
  w->decoder.unflatten(flat);
  w->k1 = k1;
  w->k2 = k2;
  w->standardization.mean = Eigen::VectorXd::Constant(out, 0.3);
  w->standardization.scale = Eigen::VectorXd::LinSpaced(out, 0.5, 2.0);
  return w;
}

inline inference::PrevalenceData random_data(std::size_t k, std::int64_t tests, Engine& engine) {
  inference::PrevalenceData d;
  for (std::size_t i = 0; i < k; ++i) {
    std::binomial_distribution<std::int64_t> binom(tests, 0.2 + 0.5 * static_cast<double>(i % 3) / 3.0);
    d.labels.push_back("u" + std::to_string(i));
    d.n_tests.push_back(tests);
    d.n_pos.push_back(binom(engine));
  }
  return d;
}

/// Rectangular tilings on a regular grid over the unit square.
inline std::shared_ptr<inference::GeometryHandles> tiled_geometry(int resolution, int ro, int co,
                                                                  int rn, int cn) {
  const auto parts = synth::make_partitions(ro, co, rn, cn, {0.0, 0.0, 1.0, 1.0});
  auto g = std::make_shared<inference::GeometryHandles>();
  g->grid = geometry::build_grid(geometry::BoundingBox{0.0, 0.0, 1.0, 1.0}, resolution);
  g->m_old = geometry::membership_matrix(g->grid, parts.old_set);
  g->m_new = geometry::membership_matrix(g->grid, parts.new_set);
  return g;
}

}  // namespace aggvae::testing
