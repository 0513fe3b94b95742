#include "aggvae/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "aggvae/error.hpp"

namespace aggvae::diagnostics {

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw Error("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw Error("quantile probability outside [0, 1]");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, p);
}

namespace {

void check_shape(const Eigen::MatrixXd& draws) {
  if (draws.cols() < 2) throw Error("diagnostics need at least 2 chains");
  if (draws.rows() < 4) throw Error("diagnostics need at least 4 draws per chain");
  if (!draws.allFinite()) throw Error("diagnostics received non-finite draws");
}

bool is_constant(const Eigen::MatrixXd& draws) {
  return draws.maxCoeff() == draws.minCoeff();
}

/// Each chain cut into two halves; an odd middle draw is dropped.
Eigen::MatrixXd split_chains(const Eigen::MatrixXd& draws) {
  const Eigen::Index n = draws.rows();
  const Eigen::Index half = n / 2;
  Eigen::MatrixXd out(half, 2 * draws.cols());
  for (Eigen::Index c = 0; c < draws.cols(); ++c) {
    out.col(2 * c) = draws.col(c).head(half);
    out.col(2 * c + 1) = draws.col(c).tail(half);
  }
  return out;
}

double rhat_basic(const Eigen::MatrixXd& chains) {
  const auto n = static_cast<double>(chains.rows());
  const Eigen::Index m = chains.cols();
  Eigen::VectorXd means(m);
  Eigen::VectorXd vars(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    means(c) = chains.col(c).mean();
    vars(c) = (chains.col(c).array() - means(c)).square().sum() / (n - 1.0);
  }
  const double grand = means.mean();
  const double between = n * (means.array() - grand).square().sum() / static_cast<double>(m - 1);
  const double within = vars.mean();
  if (within <= 0.0) return 1.0;
  return std::sqrt(((n - 1.0) / n * within + between / n) / within);
}

/// Autocovariances computed on demand by direct summation (divisor n).
class Autocovariance {
 public:
  explicit Autocovariance(const Eigen::MatrixXd& chains) : centred_(chains) {
    for (Eigen::Index c = 0; c < chains.cols(); ++c) {
      centred_.col(c).array() -= chains.col(c).mean();
    }
  }
  /// Mean over chains of the lag-t autocovariance.
  double mean_at(Eigen::Index lag) const {
    const Eigen::Index n = centred_.rows();
    if (lag >= n) return 0.0;
    double total = 0.0;
    for (Eigen::Index c = 0; c < centred_.cols(); ++c) {
      const auto col = centred_.col(c);
      total += col.head(n - lag).dot(col.tail(n - lag)) / static_cast<double>(n);
    }
    return total / static_cast<double>(centred_.cols());
  }

 private:
  Eigen::MatrixXd centred_;
};

double ess_basic(const Eigen::MatrixXd& chains) {
  const Eigen::Index n = chains.rows();
  const Eigen::Index m = chains.cols();
  const auto nd = static_cast<double>(n);
  const double total = nd * static_cast<double>(m);
  Autocovariance acov(chains);

  Eigen::VectorXd means(m);
  for (Eigen::Index c = 0; c < m; ++c) means(c) = chains.col(c).mean();
  const double mean_var = acov.mean_at(0) * nd / (nd - 1.0);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) {
    var_plus += (means.array() - means.mean()).square().sum() / static_cast<double>(m - 1);
  }
  if (!(var_plus > 0.0)) return total;

  std::vector<double> rho(static_cast<std::size_t>(n) + 2, 0.0);
  auto rho_at = [&](Eigen::Index lag) { return 1.0 - (mean_var - acov.mean_at(lag)) / var_plus; };
  Eigen::Index t = 0;
  double rho_even = 1.0;
  double rho_odd = rho_at(1);
  rho[0] = rho_even;
  rho[1] = rho_odd;
  while (t < n - 5 && !std::isnan(rho_even + rho_odd) && rho_even + rho_odd > 0.0) {
    t += 2;
    rho_even = rho_at(t);
    rho_odd = rho_at(t + 1);
    if (rho_even + rho_odd >= 0.0) {
      rho[static_cast<std::size_t>(t)] = rho_even;
      rho[static_cast<std::size_t>(t + 1)] = rho_odd;
    }
  }
  const Eigen::Index max_t = t;
  if (rho_even > 0.0) rho[static_cast<std::size_t>(max_t)] = rho_even;

  // Initial monotone sequence over consecutive pair sums.
  t = 0;
  while (t <= max_t - 4) {
    t += 2;
    const auto i = static_cast<std::size_t>(t);
    if (rho[i] + rho[i + 1] > rho[i - 2] + rho[i - 1]) {
      rho[i] = (rho[i - 2] + rho[i - 1]) / 2.0;
      rho[i + 1] = rho[i];
    }
  }
  double tau = -1.0 + rho[static_cast<std::size_t>(max_t)];
  for (Eigen::Index k = 0; k < max_t; ++k) tau += 2.0 * rho[static_cast<std::size_t>(k)];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

}  // namespace

Eigen::MatrixXd rank_normalize(const Eigen::MatrixXd& draws) {
  const Eigen::Index s = draws.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(s));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const double* v = draws.data();
  std::stable_sort(order.begin(), order.end(),
                   [v](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });
  Eigen::MatrixXd out(draws.rows(), draws.cols());
  const boost::math::normal standard;
  const double denom = static_cast<double>(s) + 0.25;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    const double z = boost::math::quantile(standard, (avg_rank - 0.375) / denom);
    for (std::size_t k = i; k <= j; ++k) out.data()[order[k]] = z;
    i = j + 1;
  }
  return out;
}

double split_rhat(const Eigen::MatrixXd& draws) {
  check_shape(draws);
  if (is_constant(draws)) return 1.0;
  return rhat_basic(rank_normalize(split_chains(draws)));
}

double ess_bulk(const Eigen::MatrixXd& draws) {
  check_shape(draws);
  const double total = static_cast<double>(draws.size());
  if (is_constant(draws)) return total;
  return ess_basic(rank_normalize(split_chains(draws)));
}

double split_rhat_raw(const Eigen::MatrixXd& draws) {
  check_shape(draws);
  if (is_constant(draws)) return 1.0;
  return rhat_basic(split_chains(draws));
}

double ess_raw(const Eigen::MatrixXd& draws) {
  check_shape(draws);
  if (is_constant(draws)) return static_cast<double>(draws.size());
  return ess_basic(split_chains(draws));
}

std::vector<ParameterSummary> summarize(const inference::ChainSet& set) {
  std::vector<ParameterSummary> rows;
  for (std::size_t j = 0; j < set.num_columns(); ++j) {
    const auto& name = set.columns()[j];
    if (name.rfind("__", 0) == 0) continue;
    const Eigen::MatrixXd m = set.column(j);
    ParameterSummary r;
    r.name = name;
    r.mean = m.mean();
    const double n = static_cast<double>(m.size());
    r.sd = n > 1 ? std::sqrt((m.array() - r.mean).square().sum() / (n - 1.0)) : 0.0;
    std::vector<double> pooled(m.data(), m.data() + m.size());
    std::sort(pooled.begin(), pooled.end());
    r.q025 = quantile_sorted(pooled, 0.025);
    r.q50 = quantile_sorted(pooled, 0.5);
    r.q975 = quantile_sorted(pooled, 0.975);
    r.r_hat = split_rhat(m);
    r.ess_bulk = ess_bulk(m);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string summaries_to_csv(const std::vector<ParameterSummary>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "parameter,mean,sd,q2.5,q50,q97.5,r_hat,ess_bulk\n";
  for (const auto& r : rows) {
    out << r.name << ',' << r.mean << ',' << r.sd << ',' << r.q025 << ',' << r.q50 << ','
        << r.q975 << ',' << r.r_hat << ',' << r.ess_bulk << '\n';
  }
  return out.str();
}

ModelSummary summarize_model(const inference::ChainSet& set, std::string label) {
  ModelSummary s;
  s.label = std::move(label);
  for (const auto& st : set.stats) s.elapsed_seconds += st.sampling_seconds;
  s.divergence_rate = set.divergence_rate();
  s.unreliable = set.unreliable;

  auto era = [&](const std::string& prefix, double& max_rhat, double& avg_ess,
                 std::vector<double>& all_ess) {
    const auto cols = set.indexed_columns(prefix);
    if (cols.empty()) throw Error("draws carry no " + prefix + " columns");
    max_rhat = 0.0;
    double sum = 0.0;
    for (const auto j : cols) {
      const Eigen::MatrixXd m = set.column(j);
      max_rhat = std::max(max_rhat, split_rhat(m));
      const double e = ess_bulk(m);
      sum += e;
      all_ess.push_back(e);
    }
    avg_ess = sum / static_cast<double>(cols.size());
  };
  std::vector<double> all;
  era("re_old", s.max_rhat_old, s.avg_ess_old, all);
  era("re_new", s.max_rhat_new, s.avg_ess_new, all);
  s.avg_ess_re = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
  s.ess_per_minute = s.elapsed_seconds > 0.0 ? s.avg_ess_re / (s.elapsed_seconds / 60.0) : 0.0;
  return s;
}

ComparisonReport comparison_report(const inference::ChainSet& agggp,
                                   const inference::ChainSet& aggvae) {
  auto label = [](const inference::ChainSet& set, const char* fallback) {
    if (set.model == "agggp") return std::string("aggGP");
    if (set.model == "aggvae") return std::string("aggVAE");
    return set.model.empty() ? std::string(fallback) : set.model;
  };
  return {summarize_model(agggp, label(agggp, "aggGP")),
          summarize_model(aggvae, label(aggvae, "aggVAE"))};
}

std::string format_duration(double seconds) {
  if (!std::isfinite(seconds) || seconds < 0.0) return "n/a";
  char buf[64];
  if (seconds < 1.0) {
    std::snprintf(buf, sizeof buf, "%.0fms", seconds * 1000.0);
    return buf;
  }
  const auto total = static_cast<long long>(std::llround(seconds));
  struct Unit {
    long long size;
    const char* suffix;
  };
  const Unit units[] = {{86400, "d"}, {3600, "h"}, {60, "m"}, {1, "s"}};
  std::string out;
  long long rest = total;
  int printed = 0;
  for (const auto& u : units) {
    const long long q = rest / u.size;
    rest %= u.size;
    if (q == 0 && printed == 0) continue;
    if (printed == 2) break;
    ++printed;
    if (q == 0) continue;
    if (!out.empty()) out += ' ';
    out += std::to_string(q) + u.suffix;
  }
  return out;
}

namespace {

std::string number(double x, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
  return buf;
}

std::string ess_number(double x) { return number(x, x >= 100.0 ? 0 : 2); }

struct Row {
  std::string metric;
  std::string a;
  std::string b;
};

std::vector<Row> rows(const ComparisonReport& r) {
  return {
      {"Elapsed time (sampling)", format_duration(r.first.elapsed_seconds),
       format_duration(r.second.elapsed_seconds)},
      {"Average ESS of the REs", ess_number(r.first.avg_ess_re), ess_number(r.second.avg_ess_re)},
      {"ESS per minute", ess_number(r.first.ess_per_minute), ess_number(r.second.ess_per_minute)},
      {"Maximum R-hat of REs, old boundaries", number(r.first.max_rhat_old, 2),
       number(r.second.max_rhat_old, 2)},
      {"Maximum R-hat of REs, new boundaries", number(r.first.max_rhat_new, 2),
       number(r.second.max_rhat_new, 2)},
      {"Average ESS of the REs, old boundaries", ess_number(r.first.avg_ess_old),
       ess_number(r.second.avg_ess_old)},
      {"Average ESS of the REs, new boundaries", ess_number(r.first.avg_ess_new),
       ess_number(r.second.avg_ess_new)},
  };
}

}  // namespace

std::string format_table(const ComparisonReport& report) {
  const auto body = rows(report);
  std::size_t w0 = std::string("Metric").size();
  std::size_t w1 = report.first.label.size();
  std::size_t w2 = report.second.label.size();
  for (const auto& r : body) {
    w0 = std::max(w0, r.metric.size());
    w1 = std::max(w1, r.a.size());
    w2 = std::max(w2, r.b.size());
  }
  auto pad_right = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); };
  auto pad_left = [](const std::string& s, std::size_t w) { return std::string(w - s.size(), ' ') + s; };
  std::ostringstream out;
  out << "Elapsed time and ESS per minute use post-warmup sampling time summed over chains.\n";
  out << pad_right("Metric", w0) << "  " << pad_left(report.first.label, w1) << "  "
      << pad_left(report.second.label, w2) << '\n';
  out << std::string(w0 + w1 + w2 + 4, '-') << '\n';
  for (const auto& r : body) {
    out << pad_right(r.metric, w0) << "  " << pad_left(r.a, w1) << "  " << pad_left(r.b, w2) << '\n';
  }
  for (const auto* m : {&report.first, &report.second}) {
    if (m->unreliable) {
      out << "warning: " << m->label << " chains flagged unreliable (divergence rate "
          << number(m->divergence_rate, 3) << ")\n";
    }
  }
  return out.str();
}

std::string format_csv(const ComparisonReport& report) {
  std::ostringstream out;
  out.precision(10);
  const auto& a = report.first;
  const auto& b = report.second;
  out << "metric," << a.label << ',' << b.label << '\n';
  out << "elapsed_seconds," << a.elapsed_seconds << ',' << b.elapsed_seconds << '\n';
  out << "avg_ess_re," << a.avg_ess_re << ',' << b.avg_ess_re << '\n';
  out << "ess_per_minute," << a.ess_per_minute << ',' << b.ess_per_minute << '\n';
  out << "max_rhat_re_old," << a.max_rhat_old << ',' << b.max_rhat_old << '\n';
  out << "max_rhat_re_new," << a.max_rhat_new << ',' << b.max_rhat_new << '\n';
  out << "avg_ess_re_old," << a.avg_ess_old << ',' << b.avg_ess_old << '\n';
  out << "avg_ess_re_new," << a.avg_ess_new << ',' << b.avg_ess_new << '\n';
  return out.str();
}

}  // namespace aggvae::diagnostics
