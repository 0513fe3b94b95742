#include "aggvae/mlp.hpp"

#include <cmath>

#include "aggvae/error.hpp"

namespace aggvae::vae {

std::string to_string(Activation a) {
  return a == Activation::kTanh ? "tanh" : "relu";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw Error("unknown activation '" + name + "' (expected tanh or relu)");
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw Error("MLP needs at least 2 layers");
  for (int s : layer_sizes) {
    if (s < 1) throw Error("MLP layer sizes must be positive");
  }
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t l = 0; l + 1 < spec_.layer_sizes.size(); ++l) {
    layers_.push_back({Eigen::MatrixXd::Zero(spec_.layer_sizes[l + 1], spec_.layer_sizes[l]),
                       Eigen::VectorXd::Zero(spec_.layer_sizes[l + 1])});
  }
}

Mlp Mlp::glorot(MlpSpec spec, Engine& engine) {
  Mlp mlp(std::move(spec));
  for (auto& layer : mlp.layers_) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = u(engine);
    }
  }
  return mlp;
}

namespace {

void activate(Eigen::MatrixXd& x, Activation a) {
  if (a == Activation::kTanh) {
    x = x.array().tanh().matrix();
  } else {
    x = x.cwiseMax(0.0);
  }
}

// Derivative expressed through the post-activation value.
Eigen::MatrixXd activation_derivative(const Eigen::MatrixXd& y, Activation a) {
  if (a == Activation::kTanh) return (1.0 - y.array().square()).matrix();
  return (y.array() > 0.0).cast<double>().matrix();
}

}  // namespace

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input) const {
  if (input.rows() != spec_.input_size()) {
    throw Error("MLP input has " + std::to_string(input.rows()) + " rows, expected " +
                std::to_string(spec_.input_size()));
  }
  Eigen::MatrixXd x = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd next = layers_[l].weight * x;
    next.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) activate(next, spec_.activation);
    x = std::move(next);
  }
  return x;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input, Tape& tape) const {
  if (input.rows() != spec_.input_size()) {
    throw Error("MLP input has " + std::to_string(input.rows()) + " rows, expected " +
                std::to_string(spec_.input_size()));
  }
  tape.values.resize(layers_.size() + 1);
  tape.values[0] = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd next = layers_[l].weight * tape.values[l];
    next.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) activate(next, spec_.activation);
    tape.values[l + 1] = std::move(next);
  }
  return tape.values.back();
}

Eigen::VectorXd Mlp::apply(const Eigen::VectorXd& input) const {
  return forward(Eigen::MatrixXd(input)).col(0);
}

Eigen::MatrixXd Mlp::backward(const Tape& tape, const Eigen::MatrixXd& grad_output,
                              std::vector<DenseLayer>* grads) const {
  if (tape.values.size() != layers_.size() + 1) throw Error("MLP tape does not match network");
  Eigen::MatrixXd delta = grad_output;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (l + 1 < layers_.size()) {
      delta.array() *= activation_derivative(tape.values[l + 1], spec_.activation).array();
    }
    if (grads != nullptr) {
      (*grads)[l].weight.noalias() += delta * tape.values[l].transpose();
      (*grads)[l].bias += delta.rowwise().sum();
    }
    delta = layers_[l].weight.transpose() * delta;
  }
  return delta;
}

std::vector<DenseLayer> Mlp::zero_gradients() const {
  std::vector<DenseLayer> g;
  g.reserve(layers_.size());
  for (const auto& layer : layers_) {
    g.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                 Eigen::VectorXd::Zero(layer.bias.size())});
  }
  return g;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  }
  return n;
}

Eigen::VectorXd flatten(const std::vector<DenseLayer>& layers) {
  Eigen::Index n = 0;
  for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
  Eigen::VectorXd flat(n);
  Eigen::Index at = 0;
  for (const auto& layer : layers) {
    flat.segment(at, layer.weight.size()) =
        Eigen::Map<const Eigen::VectorXd>(layer.weight.data(), layer.weight.size());
    at += layer.weight.size();
    flat.segment(at, layer.bias.size()) = layer.bias;
    at += layer.bias.size();
  }
  return flat;
}

Eigen::VectorXd Mlp::flatten() const { return vae::flatten(layers_); }

void Mlp::unflatten(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw Error("parameter vector length does not match the network");
  }
  Eigen::Index at = 0;
  for (auto& layer : layers_) {
    Eigen::Map<Eigen::VectorXd>(layer.weight.data(), layer.weight.size()) =
        flat.segment(at, layer.weight.size());
    at += layer.weight.size();
    layer.bias = flat.segment(at, layer.bias.size());
    at += layer.bias.size();
  }
}

}  // namespace aggvae::vae
