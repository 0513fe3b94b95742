#include "aggvae/models.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "aggvae/aggregation.hpp"
#include "aggvae/error.hpp"

namespace aggvae::inference {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178;

std::vector<std::string> indexed(const std::string& stem, std::size_t n) {
  std::vector<std::string> v;
  v.reserve(n);
  for (std::size_t i = 0; i < n; ++i) v.push_back(stem + "[" + std::to_string(i) + "]");
  return v;
}

void append(std::vector<std::string>& to, const std::vector<std::string>& from) {
  to.insert(to.end(), from.begin(), from.end());
}

std::string describe(const Eigen::VectorXd& x) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "[";
  for (Eigen::Index i = 0; i < x.size(); ++i) ss << (i ? ", " : "") << x(i);
  ss << "]";
  return ss.str();
}

}  // namespace

Eigen::VectorXd LogDensity::initial_point(Engine& engine) const {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Eigen::VectorXd x(static_cast<Eigen::Index>(dim()));
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = u(engine);
  return x;
}

std::string to_string(ModelKind kind) {
  return kind == ModelKind::kAggGp ? "agggp" : "aggvae";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "agggp" || name == "aggGP") return ModelKind::kAggGp;
  if (name == "aggvae" || name == "aggVAE") return ModelKind::kAggVae;
  throw Error("unknown model '" + name + "' (expected agggp or aggvae)");
}

void ModelSpec::validate() const {
  data_old.validate();
  data_new.validate();
  if (!(priors.intercept > 0.0) || !(priors.s > 0.0)) throw Error("prior scales must be positive");
  if (kind == ModelKind::kAggVae) {
    if (!decoder || geometry) throw Error("aggVAE model needs a decoder and no geometry");
    decoder->validate();
    if (decoder->k1 != data_old.size() || decoder->k2 != data_new.size()) {
      throw Error("decoder emits " + std::to_string(decoder->k1) + "+" +
                  std::to_string(decoder->k2) + " units but data has " +
                  std::to_string(data_old.size()) + "+" + std::to_string(data_new.size()));
    }
  } else {
    if (!geometry || decoder) throw Error("aggGP model needs geometry and no decoder");
    hyperpriors.validate();
    if (geometry->m_old.rows() != data_old.size() || geometry->m_new.rows() != data_new.size()) {
      throw Error("membership matrices do not match the data unit counts");
    }
    if (geometry->m_old.cols() != geometry->grid.size() ||
        geometry->m_new.cols() != geometry->grid.size()) {
      throw Error("membership matrices do not match the grid");
    }
    if (!(gp_jitter > 0.0)) throw Error("gp_jitter must be positive");
  }
}

// ---------------------------------------------------------------- aggVAE

AggVaeModel::AggVaeModel(ModelSpec spec) : spec_(std::move(spec)) {
  if (spec_.kind != ModelKind::kAggVae) throw Error("AggVaeModel requires kind aggVAE");
  spec_.validate();
}

std::size_t AggVaeModel::dim() const {
  return 2 + static_cast<std::size_t>(spec_.decoder->latent_dim());
}

double AggVaeModel::log_density(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const {
  if (static_cast<std::size_t>(x.size()) != dim()) throw Error("aggVAE: parameter length mismatch");
  const auto& w = *spec_.decoder;
  const auto k1 = static_cast<Eigen::Index>(w.k1);
  const auto k2 = static_cast<Eigen::Index>(w.k2);
  const double b0 = x(0);
  const double log_s = x(1);
  const double s = std::exp(log_s);
  const Eigen::VectorXd z = x.tail(x.size() - 2);

  const Eigen::VectorXd f = vae::decode(z, w);
  const Eigen::VectorXd eta_old = (b0 + s * f.head(k1).array()).matrix();
  const Eigen::VectorXd eta_new = (b0 + s * f.tail(k2).array()).matrix();
  Eigen::VectorXd g_old;
  Eigen::VectorXd g_new;
  double lp = binomial_log_likelihood(spec_.data_old, eta_old, grad ? &g_old : nullptr) +
              binomial_log_likelihood(spec_.data_new, eta_new, grad ? &g_new : nullptr);
  lp += -0.5 * z.squaredNorm() - static_cast<double>(z.size()) * kHalfLog2Pi;
  lp += priors::log_normal(b0, 0.0, spec_.priors.intercept);
  lp += priors::log_half_normal(s, spec_.priors.s) + log_s;

  if (grad != nullptr) {
    Eigen::VectorXd g_f(k1 + k2);
    g_f << g_old, g_new;
    Eigen::VectorXd vjp;
    vae::decode_with_vjp(z, w, g_f, &vjp);
    grad->resize(x.size());
    (*grad)(0) = g_f.sum() - b0 / (spec_.priors.intercept * spec_.priors.intercept);
    (*grad)(1) = s * g_f.dot(f) - (s * s) / (spec_.priors.s * spec_.priors.s) + 1.0;
    grad->tail(z.size()) = s * vjp - z;
  }
  return lp;
}

std::vector<std::string> AggVaeModel::output_names() const {
  const auto& w = *spec_.decoder;
  std::vector<std::string> names{"b0", "s"};
  append(names, indexed("z", static_cast<std::size_t>(w.latent_dim())));
  append(names, indexed("re_old", w.k1));
  append(names, indexed("re_new", w.k2));
  append(names, indexed("theta_old", w.k1));
  append(names, indexed("theta_new", w.k2));
  return names;
}

Eigen::VectorXd AggVaeModel::outputs(const Eigen::VectorXd& x) const {
  const auto& w = *spec_.decoder;
  const auto d = static_cast<Eigen::Index>(w.latent_dim());
  const auto k = static_cast<Eigen::Index>(w.k1 + w.k2);
  const double s = std::exp(x(1));
  const Eigen::VectorXd z = x.tail(d);
  const Eigen::VectorXd re = s * vae::decode(z, w);
  Eigen::VectorXd out(2 + d + 2 * k);
  out(0) = x(0);
  out(1) = s;
  out.segment(2, d) = z;
  out.segment(2 + d, k) = re;
  for (Eigen::Index i = 0; i < k; ++i) out(2 + d + k + i) = logistic(x(0) + re(i));
  return out;
}

// ----------------------------------------------------------------- aggGP

AggGpModel::AggGpModel(ModelSpec spec) : spec_(std::move(spec)) {
  if (spec_.kind != ModelKind::kAggGp) throw Error("AggGpModel requires kind aggGP");
  spec_.validate();
  sq_dist_ = priors::squared_distances(spec_.geometry->grid);
  cell_area_ = spec_.geometry->grid.cell_area();
}

std::size_t AggGpModel::dim() const { return 3 + spec_.geometry->grid.size(); }

Eigen::VectorXd AggGpModel::initial_point(Engine& engine) const {
  Eigen::VectorXd x = LogDensity::initial_point(engine);
  // log sigma starts within 0.5 of log(sigma_scale).
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  x(2) = std::log(spec_.hyperpriors.sigma_scale) + u(engine);
  return x;
}

Eigen::VectorXd AggGpModel::field(const Eigen::VectorXd& x) const {
  const double l = std::exp(x(1));
  const double sigma = std::exp(x(2));
  Eigen::MatrixXd k = (sq_dist_.array() * (-0.5 / (l * l))).exp().matrix();
  k.diagonal().array() += spec_.gp_jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) return {};
  const auto n = static_cast<Eigen::Index>(sq_dist_.rows());
  Eigen::VectorXd f = llt.matrixL() * x.tail(n);
  return sigma * f;
}

double AggGpModel::log_density(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const {
  if (static_cast<std::size_t>(x.size()) != dim()) throw Error("aggGP: parameter length mismatch");
  const auto& geo = *spec_.geometry;
  const auto n = static_cast<Eigen::Index>(geo.grid.size());
  const double b0 = x(0);
  const double log_l = x(1);
  const double log_sigma = x(2);
  const double l = std::exp(log_l);
  const double sigma = std::exp(log_sigma);
  const Eigen::VectorXd eta = x.tail(n);
  if (!std::isfinite(l) || !std::isfinite(sigma) || !(l > 0.0) || !(sigma > 0.0)) return kNegInf;

  const Eigen::MatrixXd corr = (sq_dist_.array() * (-0.5 / (l * l))).exp().matrix();
  Eigen::MatrixXd jittered = corr;
  jittered.diagonal().array() += spec_.gp_jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(jittered);
  if (llt.info() != Eigen::Success) return kNegInf;
  const Eigen::MatrixXd lower = llt.matrixL();
  if (!lower.allFinite()) return kNegInf;

  Eigen::VectorXd f = lower.triangularView<Eigen::Lower>() * eta;
  f *= sigma;
  const Eigen::VectorXd eta_old =
      (b0 + cell_area_ * aggregation::aggregate(f, geo.m_old).values.array()).matrix();
  const Eigen::VectorXd eta_new =
      (b0 + cell_area_ * aggregation::aggregate(f, geo.m_new).values.array()).matrix();
  Eigen::VectorXd g_old;
  Eigen::VectorXd g_new;
  double lp = binomial_log_likelihood(spec_.data_old, eta_old, grad ? &g_old : nullptr) +
              binomial_log_likelihood(spec_.data_new, eta_new, grad ? &g_new : nullptr);
  lp += -0.5 * eta.squaredNorm() - static_cast<double>(n) * kHalfLog2Pi;
  lp += priors::log_normal(b0, 0.0, spec_.priors.intercept);
  lp += priors::log_density_hyperpriors(l, sigma, spec_.hyperpriors) + log_l + log_sigma;
  if (!std::isfinite(lp)) return kNegInf;

  if (grad != nullptr) {
    const auto& hp = spec_.hyperpriors;
    const Eigen::VectorXd g_f =
        cell_area_ * (aggregation::scatter(g_old, geo.m_old) + aggregation::scatter(g_new, geo.m_new));
    const Eigen::VectorXd a = lower.transpose() * g_f;
    grad->resize(x.size());
    (*grad)(0) = g_old.sum() + g_new.sum() - b0 / (spec_.priors.intercept * spec_.priors.intercept);

    // Forward sensitivity of the factor: with X = L^-1 dK L^-T, dL = L Phi(X)
    // where Phi keeps the strict lower triangle and halves the diagonal.
    const Eigen::MatrixXd d_corr = corr.cwiseProduct(sq_dist_) / (l * l);
    const Eigen::MatrixXd half = lower.triangularView<Eigen::Lower>().solve(d_corr);
    const Eigen::MatrixXd x_mat =
        lower.triangularView<Eigen::Lower>().solve(half.transpose());
    Eigen::VectorXd phi_eta = x_mat.triangularView<Eigen::StrictlyLower>() * eta;
    phi_eta += 0.5 * x_mat.diagonal().cwiseProduct(eta);
    (*grad)(1) = sigma * a.dot(phi_eta) - (hp.lengthscale_shape + 1.0) +
                 hp.lengthscale_scale / l + 1.0;
    (*grad)(2) = g_f.dot(f) - (sigma * sigma) / (hp.sigma_scale * hp.sigma_scale) + 1.0;
    grad->tail(n) = sigma * a - eta;
  }
  return lp;
}

std::vector<std::string> AggGpModel::output_names() const {
  const auto& geo = *spec_.geometry;
  std::vector<std::string> names{"b0", "lengthscale", "sigma"};
  append(names, indexed("eta", geo.grid.size()));
  append(names, indexed("re_old", geo.m_old.rows()));
  append(names, indexed("re_new", geo.m_new.rows()));
  append(names, indexed("theta_old", geo.m_old.rows()));
  append(names, indexed("theta_new", geo.m_new.rows()));
  return names;
}

Eigen::VectorXd AggGpModel::outputs(const Eigen::VectorXd& x) const {
  const auto& geo = *spec_.geometry;
  const auto n = static_cast<Eigen::Index>(geo.grid.size());
  const auto k1 = static_cast<Eigen::Index>(geo.m_old.rows());
  const auto k2 = static_cast<Eigen::Index>(geo.m_new.rows());
  const Eigen::VectorXd f = field(x);
  if (f.size() == 0) throw Error("aggGP: factorisation failed at a recorded draw");
  Eigen::VectorXd re(k1 + k2);
  re << cell_area_ * aggregation::aggregate(f, geo.m_old).values,
      cell_area_ * aggregation::aggregate(f, geo.m_new).values;
  Eigen::VectorXd out(3 + n + 2 * (k1 + k2));
  out(0) = x(0);
  out(1) = std::exp(x(1));
  out(2) = std::exp(x(2));
  out.segment(3, n) = x.tail(n);
  out.segment(3 + n, k1 + k2) = re;
  for (Eigen::Index i = 0; i < k1 + k2; ++i) out(3 + n + k1 + k2 + i) = logistic(x(0) + re(i));
  return out;
}

std::unique_ptr<LogDensity> make_model(const ModelSpec& spec) {
  if (spec.kind == ModelKind::kAggGp) return std::make_unique<AggGpModel>(spec);
  return std::make_unique<AggVaeModel>(spec);
}

LogPosterior log_posterior_aggvae(const Eigen::VectorXd& params, const ModelSpec& spec) {
  const AggVaeModel model(spec);
  LogPosterior r;
  r.value = model.log_density(params, &r.gradient);
  if (!std::isfinite(r.value) || !r.gradient.allFinite()) {
    throw Error("aggVAE log posterior is not finite at (b0, log s, z) = " + describe(params));
  }
  return r;
}

LogPosterior log_posterior_agggp(const Eigen::VectorXd& params, const ModelSpec& spec) {
  const AggGpModel model(spec);
  LogPosterior r;
  r.value = model.log_density(params, &r.gradient);
  return r;
}

}  // namespace aggvae::inference
