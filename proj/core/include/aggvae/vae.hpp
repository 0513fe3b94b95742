#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aggvae/aggregation.hpp"
#include "aggvae/mlp.hpp"
#include "aggvae/priors.hpp"

namespace aggvae::vae {

/// Hidden widths are listed encoder-side; the decoder mirrors them.
struct VaeArchitecture {
  std::vector<int> hidden;
  int latent_dim = 0;
  Activation activation = Activation::kTanh;

  /// Two hidden layers of width 4 * dim, latent ceil(dim / 4).
  static VaeArchitecture defaults(std::size_t data_dim);
  MlpSpec encoder_spec(std::size_t data_dim) const;
  MlpSpec decoder_spec(std::size_t data_dim) const;
};

struct VaeParams {
  Mlp encoder;  // data_dim -> 2 * latent_dim (mean then log-scale)
  Mlp decoder;  // latent_dim -> data_dim

  int latent_dim() const { return decoder.spec().input_size(); }
  int data_dim() const { return decoder.spec().output_size(); }
};

VaeParams make_vae(std::size_t data_dim, const VaeArchitecture& arch, Engine& engine);

/// Per-coordinate affine map between data and training coordinates.
struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardization fit(const Eigen::MatrixXd& columns);
  Eigen::MatrixXd forward(const Eigen::MatrixXd& columns) const;
  Eigen::VectorXd inverse(const Eigen::VectorXd& standardized) const;
};

struct TrainingProvenance {
  std::uint64_t root_seed = 0;
  int epochs = 0;
  int batch_size = 0;
  double learning_rate = 0.0;
  double noise_sigma = 0.0;
  double final_loss = 0.0;
  std::size_t training_size = 0;
  int grid_resolution = 0;
  priors::HyperPriorSpec hyperpriors;
  std::map<std::string, std::string> extra;
};

/// The reusable prior: a frozen decoder emitting joint aggregates on their
/// original scale.
struct DecoderWeights {
  Mlp decoder;
  std::size_t k1 = 0;
  std::size_t k2 = 0;
  Standardization standardization;
  TrainingProvenance provenance;

  int latent_dim() const { return decoder.spec().input_size(); }
  std::size_t output_dim() const { return k1 + k2; }
  void validate() const;
};

struct Encoding {
  Eigen::VectorXd mu;
  Eigen::VectorXd log_sigma;
};

Encoding encode(const Eigen::VectorXd& y, const Mlp& encoder);

/// Decoder output mapped back through the stored standardization.
Eigen::VectorXd decode(const Eigen::VectorXd& z, const DecoderWeights& weights);

/// decode(z) and, for a cotangent g on the output, J(z)^T g.
Eigen::VectorXd decode_with_vjp(const Eigen::VectorXd& z, const DecoderWeights& weights,
                                const Eigen::VectorXd& cotangent,
                                Eigen::VectorXd* vjp);

/// Closed-form KL(N(mu, diag sigma^2) || N(0, I)).
double kl_gaussian(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_sigma);

struct ElboReport {
  double reconstruction_term = 0.0;
  double kl_term = 0.0;
  double total = 0.0;
};

struct VaeGradients {
  std::vector<DenseLayer> encoder;
  std::vector<DenseLayer> decoder;
};

/// Negative ELBO averaged over the batch (columns of `batch`). Reconstruction
/// is the Gaussian negative log-likelihood with fixed scale `noise_sigma`, one
/// reparameterised latent draw per datum from the stream keyed by `seed`.
/// Gradients of `total` are added into `grads` when given.
ElboReport elbo_loss(const Eigen::MatrixXd& batch, const VaeParams& params,
                     double noise_sigma, std::uint64_t seed,
                     VaeGradients* grads = nullptr);

struct TrainOptions {
  int epochs = 200;
  int batch_size = 128;
  double learning_rate = 1e-3;
  /// Learning rate decays geometrically to learning_rate * final_lr_ratio at
  /// the last epoch.
  double final_lr_ratio = 1.0;
  double noise_sigma = 0.01;  // in standardized units
  std::uint64_t seed = 0;
  int grid_resolution = 0;
  priors::HyperPriorSpec hyperpriors;
  /// Called after each epoch with (epoch, mean loss).
  std::function<void(int, double)> on_epoch;
};

struct TrainResult {
  DecoderWeights decoder;
  Mlp encoder;
  std::vector<double> loss_trace;  // epoch-mean total loss
};

/// Adam on the negative ELBO over standardized training data.
TrainResult train(const aggregation::TrainingSet& data, const VaeArchitecture& arch,
                  const TrainOptions& options);

Eigen::VectorXd sample_prior(const DecoderWeights& weights, std::uint64_t seed);
Eigen::VectorXd sample_prior(const DecoderWeights& weights, Engine& engine);

/// Magic "AGGVAEDW", JSON header, then f64 blocks: standardization mean,
/// standardization scale, and each decoder layer (weight column-major, bias).
void save_decoder(const std::filesystem::path& path, const DecoderWeights& weights);
DecoderWeights load_decoder(const std::filesystem::path& path);

}  // namespace aggvae::vae
