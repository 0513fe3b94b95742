#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aggvae/rng.hpp"

namespace aggvae::vae {

enum class Activation { kTanh, kRelu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Layer widths from input to output. The activation applies to hidden
/// layers only; the output layer is affine.
struct MlpSpec {
  std::vector<int> layer_sizes;
  Activation activation = Activation::kTanh;

  void validate() const;
  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

class Mlp {
 public:
  Mlp() = default;
  /// All-zero parameters.
  explicit Mlp(MlpSpec spec);
  /// Glorot-uniform weights, zero biases.
  static Mlp glorot(MlpSpec spec, Engine& engine);

  const MlpSpec& spec() const { return spec_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  /// Post-activation values per layer; entry 0 is the input.
  struct Tape {
    std::vector<Eigen::MatrixXd> values;
  };

  /// Columns are samples.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, Tape& tape) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& input) const;

  /// Reverse pass for a loss whose gradient w.r.t. the output is
  /// `grad_output`. Adds parameter gradients into `grads` when given and
  /// returns the gradient w.r.t. the input.
  Eigen::MatrixXd backward(const Tape& tape, const Eigen::MatrixXd& grad_output,
                           std::vector<DenseLayer>* grads) const;

  std::vector<DenseLayer> zero_gradients() const;
  std::size_t parameter_count() const;

  /// Layer order; per layer the weight (column-major) then the bias.
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);

 private:
  MlpSpec spec_;
  std::vector<DenseLayer> layers_;
};

Eigen::VectorXd flatten(const std::vector<DenseLayer>& layers);

}  // namespace aggvae::vae
