#include "aggvae/vae.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "aggvae/container.hpp"
#include "aggvae/error.hpp"

namespace aggvae::vae {

using nlohmann::json;

namespace {
constexpr std::string_view kDecoderMagic = "AGGVAEDW";
constexpr double kHalfLog2Pi = 0.91893853320467274178;

// First-order adaptive-moment optimiser over a flat parameter vector.
class Adam {
 public:
  Adam(Eigen::Index n, double learning_rate)
      : m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)), lr_(learning_rate) {}

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  int t_ = 0;
};

std::vector<int> reversed(std::vector<int> v) {
  std::reverse(v.begin(), v.end());
  return v;
}

}  // namespace

VaeArchitecture VaeArchitecture::defaults(std::size_t data_dim) {
  const int width = static_cast<int>(4 * data_dim);
  return {{width, width}, static_cast<int>((data_dim + 3) / 4), Activation::kTanh};
}

MlpSpec VaeArchitecture::encoder_spec(std::size_t data_dim) const {
  MlpSpec s;
  s.layer_sizes.push_back(static_cast<int>(data_dim));
  for (int h : hidden) s.layer_sizes.push_back(h);
  s.layer_sizes.push_back(2 * latent_dim);
  s.activation = activation;
  return s;
}

MlpSpec VaeArchitecture::decoder_spec(std::size_t data_dim) const {
  MlpSpec s;
  s.layer_sizes.push_back(latent_dim);
  for (int h : reversed(hidden)) s.layer_sizes.push_back(h);
  s.layer_sizes.push_back(static_cast<int>(data_dim));
  s.activation = activation;
  return s;
}

VaeParams make_vae(std::size_t data_dim, const VaeArchitecture& arch, Engine& engine) {
  if (arch.latent_dim < 1) throw Error("latent dimension must be >= 1");
  if (static_cast<std::size_t>(arch.latent_dim) >= data_dim) {
    throw Error("latent dimension must be smaller than K1 + K2");
  }
  Mlp encoder = Mlp::glorot(arch.encoder_spec(data_dim), engine);
  Mlp decoder = Mlp::glorot(arch.decoder_spec(data_dim), engine);
  return {std::move(encoder), std::move(decoder)};
}

Standardization Standardization::fit(const Eigen::MatrixXd& columns) {
  Standardization s;
  s.mean = columns.rowwise().mean();
  const Eigen::MatrixXd centered = columns.colwise() - s.mean;
  const double denom = std::max<double>(1.0, static_cast<double>(columns.cols() - 1));
  s.scale = (centered.array().square().rowwise().sum() / denom).sqrt().matrix();
  for (Eigen::Index i = 0; i < s.scale.size(); ++i) {
    if (!(s.scale(i) > 0.0)) s.scale(i) = 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardization::forward(const Eigen::MatrixXd& columns) const {
  return ((columns.colwise() - mean).array().colwise() / scale.array()).matrix();
}

Eigen::VectorXd Standardization::inverse(const Eigen::VectorXd& standardized) const {
  return mean + scale.cwiseProduct(standardized);
}

void DecoderWeights::validate() const {
  const auto& spec = decoder.spec();
  spec.validate();
  if (static_cast<std::size_t>(spec.output_size()) != k1 + k2) {
    throw Error("decoder output size does not equal K1 + K2");
  }
  if (static_cast<std::size_t>(latent_dim()) >= k1 + k2) {
    throw Error("latent dimension must be smaller than K1 + K2");
  }
  if (static_cast<std::size_t>(standardization.mean.size()) != k1 + k2 ||
      standardization.scale.size() != standardization.mean.size()) {
    throw Error("standardization vectors do not match K1 + K2");
  }
  if (!decoder.flatten().allFinite()) throw Error("decoder has non-finite parameters");
}

Encoding encode(const Eigen::VectorXd& y, const Mlp& encoder) {
  const int out = encoder.spec().output_size();
  if (out % 2 != 0) throw Error("encoder output size must be even");
  const Eigen::VectorXd h = encoder.apply(y);
  const int d = out / 2;
  return {h.head(d), h.tail(d)};
}

Eigen::VectorXd decode(const Eigen::VectorXd& z, const DecoderWeights& weights) {
  if (z.size() != weights.latent_dim()) {
    throw Error("decode: latent vector has length " + std::to_string(z.size()) +
                ", expected " + std::to_string(weights.latent_dim()));
  }
  return weights.standardization.inverse(weights.decoder.apply(z));
}

Eigen::VectorXd decode_with_vjp(const Eigen::VectorXd& z, const DecoderWeights& weights,
                                const Eigen::VectorXd& cotangent, Eigen::VectorXd* vjp) {
  if (z.size() != weights.latent_dim()) throw Error("decode: latent dimension mismatch");
  Mlp::Tape tape;
  const Eigen::VectorXd raw = weights.decoder.forward(Eigen::MatrixXd(z), tape).col(0);
  if (vjp != nullptr) {
    const Eigen::MatrixXd g = cotangent.cwiseProduct(weights.standardization.scale);
    *vjp = weights.decoder.backward(tape, g, nullptr).col(0);
  }
  return weights.standardization.inverse(raw);
}

double kl_gaussian(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_sigma) {
  if (mu.size() != log_sigma.size()) throw Error("kl_gaussian: length mismatch");
  const Eigen::ArrayXd var = (2.0 * log_sigma.array()).exp();
  return 0.5 * (var + mu.array().square() - 1.0 - 2.0 * log_sigma.array()).sum();
}

ElboReport elbo_loss(const Eigen::MatrixXd& batch, const VaeParams& params,
                     double noise_sigma, std::uint64_t seed, VaeGradients* grads) {
  if (batch.cols() == 0) throw Error("elbo_loss: empty batch");
  if (!(noise_sigma > 0.0)) throw Error("elbo_loss: noise_sigma must be positive");
  const int d = params.latent_dim();
  const auto b = static_cast<double>(batch.cols());

  Mlp::Tape enc_tape;
  const Eigen::MatrixXd h = params.encoder.forward(batch, enc_tape);
  const Eigen::MatrixXd mu = h.topRows(d);
  const Eigen::MatrixXd log_sigma = h.bottomRows(d);
  const Eigen::MatrixXd sigma = log_sigma.array().exp().matrix();

  Engine engine = make_engine(seed, Stream::kVaeNoise);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd eps(d, batch.cols());
  for (Eigen::Index j = 0; j < eps.cols(); ++j) {
    for (Eigen::Index i = 0; i < d; ++i) eps(i, j) = normal(engine);
  }
  const Eigen::MatrixXd z = mu + sigma.cwiseProduct(eps);

  Mlp::Tape dec_tape;
  const Eigen::MatrixXd y_hat = params.decoder.forward(z, dec_tape);
  const Eigen::MatrixXd resid = batch - y_hat;
  const double inv_var = 1.0 / (noise_sigma * noise_sigma);

  ElboReport r;
  r.reconstruction_term =
      0.5 * inv_var * resid.squaredNorm() / b +
      static_cast<double>(batch.rows()) * (std::log(noise_sigma) + kHalfLog2Pi);
  r.kl_term = 0.5 *
              (sigma.array().square() + mu.array().square() - 1.0 - 2.0 * log_sigma.array())
                  .sum() /
              b;
  r.total = r.reconstruction_term + r.kl_term;

  if (grads != nullptr) {
    if (grads->encoder.empty()) grads->encoder = params.encoder.zero_gradients();
    if (grads->decoder.empty()) grads->decoder = params.decoder.zero_gradients();
    const Eigen::MatrixXd d_yhat = -inv_var / b * resid;
    const Eigen::MatrixXd d_z = params.decoder.backward(dec_tape, d_yhat, &grads->decoder);
    Eigen::MatrixXd d_h(2 * d, batch.cols());
    d_h.topRows(d) = d_z + mu / b;
    d_h.bottomRows(d) = (d_z.array() * sigma.array() * eps.array() +
                         (sigma.array().square() - 1.0) / b)
                            .matrix();
    params.encoder.backward(enc_tape, d_h, &grads->encoder);
  }
  return r;
}

TrainResult train(const aggregation::TrainingSet& data, const VaeArchitecture& arch,
                  const TrainOptions& options) {
  if (data.count() == 0) throw Error("train: empty training set");
  if (options.epochs < 1 || options.batch_size < 1) throw Error("train: epochs and batch size must be >= 1");
  if (!(options.learning_rate > 0.0)) throw Error("train: learning rate must be positive");
  if (!(options.final_lr_ratio > 0.0 && options.final_lr_ratio <= 1.0)) {
    throw Error("train: final_lr_ratio must lie in (0, 1]");
  }
  const std::size_t dim = data.dim();

  Engine init = make_engine(options.seed, Stream::kVaeInit);
  VaeParams params = make_vae(dim, arch, init);
  const Standardization standardization = Standardization::fit(data.samples);
  const Eigen::MatrixXd y = standardization.forward(data.samples);

  const Eigen::Index n_enc = static_cast<Eigen::Index>(params.encoder.parameter_count());
  const Eigen::Index n_dec = static_cast<Eigen::Index>(params.decoder.parameter_count());
  Eigen::VectorXd theta(n_enc + n_dec);
  theta << params.encoder.flatten(), params.decoder.flatten();
  Adam adam(theta.size(), options.learning_rate);

  const auto n = static_cast<Eigen::Index>(data.count());
  const Eigen::Index batch_size = std::min<Eigen::Index>(options.batch_size, n);
  const Eigen::Index batches = (n + batch_size - 1) / batch_size;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));

  TrainResult result;
  result.loss_trace.reserve(static_cast<std::size_t>(options.epochs));
  Eigen::MatrixXd batch(static_cast<Eigen::Index>(dim), batch_size);
  Eigen::VectorXd grad(theta.size());
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const double progress =
        options.epochs > 1 ? static_cast<double>(epoch) / static_cast<double>(options.epochs - 1) : 0.0;
    adam.set_learning_rate(options.learning_rate * std::pow(options.final_lr_ratio, progress));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Engine shuffle = make_engine(options.seed, Stream::kVaeShuffle,
                                 static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle);
    double loss_sum = 0.0;
    for (Eigen::Index bi = 0; bi < batches; ++bi) {
      const Eigen::Index start = bi * batch_size;
      const Eigen::Index size = std::min(batch_size, n - start);
      batch.resize(static_cast<Eigen::Index>(dim), size);
      for (Eigen::Index k = 0; k < size; ++k) {
        batch.col(k) = y.col(order[static_cast<std::size_t>(start + k)]);
      }
      VaeGradients g;
      const std::uint64_t noise_seed =
          derive_seed(options.seed, Stream::kVaeNoise,
                      static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(batches) +
                          static_cast<std::uint64_t>(bi));
      const ElboReport r = elbo_loss(batch, params, options.noise_sigma, noise_seed, &g);
      if (!std::isfinite(r.total)) {
        throw Error("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(bi));
      }
      loss_sum += r.total * static_cast<double>(size);
      grad << flatten(g.encoder), flatten(g.decoder);
      adam.step(theta, grad);
      params.encoder.unflatten(theta.head(n_enc));
      params.decoder.unflatten(theta.tail(n_dec));
    }
    const double mean_loss = loss_sum / static_cast<double>(n);
    result.loss_trace.push_back(mean_loss);
    if (options.on_epoch) options.on_epoch(epoch, mean_loss);
  }

  DecoderWeights& w = result.decoder;
  w.decoder = params.decoder;
  w.k1 = data.k1;
  w.k2 = data.k2;
  w.standardization = standardization;
  w.provenance.root_seed = options.seed;
  w.provenance.epochs = options.epochs;
  w.provenance.batch_size = options.batch_size;
  w.provenance.learning_rate = options.learning_rate;
  {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", options.final_lr_ratio);
    w.provenance.extra["final_lr_ratio"] = buf;
  }
  w.provenance.noise_sigma = options.noise_sigma;
  w.provenance.final_loss = result.loss_trace.back();
  w.provenance.training_size = data.count();
  w.provenance.grid_resolution = options.grid_resolution;
  w.provenance.hyperpriors = options.hyperpriors;
  result.encoder = std::move(params.encoder);
  return result;
}

Eigen::VectorXd sample_prior(const DecoderWeights& weights, Engine& engine) {
  return decode(priors::standard_normal(weights.latent_dim(), engine), weights);
}

Eigen::VectorXd sample_prior(const DecoderWeights& weights, std::uint64_t seed) {
  Engine engine = make_engine(seed, Stream::kPriorSample);
  return sample_prior(weights, engine);
}

void save_decoder(const std::filesystem::path& path, const DecoderWeights& weights) {
  weights.validate();
  const auto& p = weights.provenance;
  json header;
  header["format"] = "aggvae-decoder";
  header["version"] = 1;
  header["layer_sizes"] = weights.decoder.spec().layer_sizes;
  header["activation"] = to_string(weights.decoder.spec().activation);
  header["latent_dim"] = weights.latent_dim();
  header["k1"] = weights.k1;
  header["k2"] = weights.k2;
  header["body"] = "standardization.mean, standardization.scale, then per layer weight "
                   "(column-major) and bias";
  header["provenance"] = {{"root_seed", p.root_seed},
                          {"epochs", p.epochs},
                          {"batch_size", p.batch_size},
                          {"learning_rate", p.learning_rate},
                          {"noise_sigma", p.noise_sigma},
                          {"final_loss", p.final_loss},
                          {"training_size", p.training_size},
                          {"grid_resolution", p.grid_resolution},
                          {"lengthscale_shape", p.hyperpriors.lengthscale_shape},
                          {"lengthscale_scale", p.hyperpriors.lengthscale_scale},
                          {"sigma_scale", p.hyperpriors.sigma_scale},
                          {"extra", p.extra}};
  std::vector<double> body;
  const auto& s = weights.standardization;
  body.insert(body.end(), s.mean.data(), s.mean.data() + s.mean.size());
  body.insert(body.end(), s.scale.data(), s.scale.data() + s.scale.size());
  const Eigen::VectorXd flat = weights.decoder.flatten();
  body.insert(body.end(), flat.data(), flat.data() + flat.size());
  write_container(path, kDecoderMagic, header.dump(), body);
}

DecoderWeights load_decoder(const std::filesystem::path& path) {
  const Container c = read_container(path, kDecoderMagic);
  json header;
  try {
    header = json::parse(c.header_json);
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": bad decoder header: " + e.what());
  }
  if (header.value("format", "") != "aggvae-decoder") {
    throw Error(path.string() + ": not a decoder file");
  }
  DecoderWeights w;
  MlpSpec spec;
  spec.layer_sizes = header.at("layer_sizes").get<std::vector<int>>();
  spec.activation = activation_from_string(header.at("activation").get<std::string>());
  w.decoder = Mlp(spec);
  w.k1 = header.at("k1").get<std::size_t>();
  w.k2 = header.at("k2").get<std::size_t>();
  if (header.at("latent_dim").get<int>() != spec.input_size()) {
    throw Error(path.string() + ": latent_dim disagrees with layer sizes");
  }
  const auto dim = static_cast<Eigen::Index>(w.k1 + w.k2);
  const auto params = static_cast<Eigen::Index>(w.decoder.parameter_count());
  if (static_cast<Eigen::Index>(c.body.size()) != 2 * dim + params) {
    throw Error(path.string() + ": body has " + std::to_string(c.body.size()) +
                " values, header implies " + std::to_string(2 * dim + params));
  }
  const Eigen::Map<const Eigen::VectorXd> body(c.body.data(),
                                               static_cast<Eigen::Index>(c.body.size()));
  w.standardization.mean = body.segment(0, dim);
  w.standardization.scale = body.segment(dim, dim);
  w.decoder.unflatten(body.segment(2 * dim, params));

  const auto& p = header.at("provenance");
  auto& out = w.provenance;
  out.root_seed = p.value("root_seed", std::uint64_t{0});
  out.epochs = p.value("epochs", 0);
  out.batch_size = p.value("batch_size", 0);
  out.learning_rate = p.value("learning_rate", 0.0);
  out.noise_sigma = p.value("noise_sigma", 0.0);
  out.final_loss = p.value("final_loss", 0.0);
  out.training_size = p.value("training_size", std::size_t{0});
  out.grid_resolution = p.value("grid_resolution", 0);
  out.hyperpriors.lengthscale_shape = p.value("lengthscale_shape", 3.0);
  out.hyperpriors.lengthscale_scale = p.value("lengthscale_scale", 3.0);
  out.hyperpriors.sigma_scale = p.value("sigma_scale", 0.05);
  if (p.contains("extra")) out.extra = p["extra"].get<std::map<std::string, std::string>>();
  w.validate();
  return w;
}

}  // namespace aggvae::vae
