#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aggvae/geometry.hpp"
#include "aggvae/prevalence.hpp"
#include "aggvae/priors.hpp"
#include "aggvae/rng.hpp"
#include "aggvae/vae.hpp"

namespace aggvae::inference {

/// Differentiable log-density over an unconstrained parameter vector, plus a
/// map from that vector to the recorded output columns.
class LogDensity {
 public:
  virtual ~LogDensity() = default;

  virtual std::size_t dim() const = 0;
  /// Returns -inf outside the support. Writes the gradient when `grad` is
  /// non-null. Must be safe to call concurrently.
  virtual double log_density(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const = 0;
  virtual std::vector<std::string> output_names() const = 0;
  virtual Eigen::VectorXd outputs(const Eigen::VectorXd& x) const = 0;
  /// Uniform(-2, 2) on every unconstrained coordinate.
  virtual Eigen::VectorXd initial_point(Engine& engine) const;
};

enum class ModelKind { kAggGp, kAggVae };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// b0 ~ Normal(0, intercept); s ~ HalfNormal(s_scale).
struct PriorScales {
  double intercept = 5.0;
  double s = 1.0;
};

struct GeometryHandles {
  geometry::Grid grid;
  geometry::MembershipMatrix m_old;
  geometry::MembershipMatrix m_new;
};

struct ModelSpec {
  ModelKind kind = ModelKind::kAggVae;
  PriorScales priors;
  priors::HyperPriorSpec hyperpriors;  // aggGP only
  PrevalenceData data_old;
  PrevalenceData data_new;
  std::shared_ptr<const GeometryHandles> geometry;     // aggGP only
  std::shared_ptr<const vae::DecoderWeights> decoder;  // aggVAE only
  /// Relative diagonal jitter added to the RBF correlation inside aggGP.
  double gp_jitter = 1e-6;

  void validate() const;
};

/// Parameters (b0, log s, z). logit(theta) = b0 + s * decode(z) per unit,
/// old block first.
class AggVaeModel final : public LogDensity {
 public:
  explicit AggVaeModel(ModelSpec spec);

  std::size_t dim() const override;
  double log_density(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const override;
  std::vector<std::string> output_names() const override;
  Eigen::VectorXd outputs(const Eigen::VectorXd& x) const override;
  const ModelSpec& spec() const { return spec_; }

 private:
  ModelSpec spec_;
};

/// Whitened parameters (b0, log l, log sigma, eta). f = sigma * L(l) eta with
/// L(l) the Cholesky factor of the jittered RBF correlation; logit(theta) =
/// b0 + c * M f per boundary system.
class AggGpModel final : public LogDensity {
 public:
  explicit AggGpModel(ModelSpec spec);

  std::size_t dim() const override;
  double log_density(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const override;
  std::vector<std::string> output_names() const override;
  Eigen::VectorXd outputs(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd initial_point(Engine& engine) const override;
  const ModelSpec& spec() const { return spec_; }

  /// Grid field f at x, or an empty vector if the factorisation fails.
  Eigen::VectorXd field(const Eigen::VectorXd& x) const;

 private:
  ModelSpec spec_;
  Eigen::MatrixXd sq_dist_;
  double cell_area_ = 0.0;
};

std::unique_ptr<LogDensity> make_model(const ModelSpec& spec);

struct LogPosterior {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

/// Throws with the offending parameters when the result is not finite.
LogPosterior log_posterior_aggvae(const Eigen::VectorXd& params, const ModelSpec& spec);
/// Returns -inf (not an error) when the Cholesky factorisation fails.
LogPosterior log_posterior_agggp(const Eigen::VectorXd& params, const ModelSpec& spec);

}  // namespace aggvae::inference
