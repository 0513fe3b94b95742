#include "aggvae/nuts.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "aggvae/error.hpp"
#include "aggvae/rng.hpp"

namespace aggvae::inference {

void NutsSettings::validate() const {
  if (chains < 2) throw Error("run_nuts: need at least 2 chains");
  if (warmup < 1) throw Error("run_nuts: warmup must be at least 1");
  if (samples < 1) throw Error("run_nuts: samples must be at least 1");
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw Error("run_nuts: target_accept must lie in (0, 1)");
  }
  if (max_depth < 1) throw Error("run_nuts: max_depth must be at least 1");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double lp = -kInf;
};

class DualAveraging {
 public:
  DualAveraging(double delta, double gamma, double kappa, double t0)
      : delta_(delta), gamma_(gamma), kappa_(kappa), t0_(t0) {}

  void set_mu(double mu) { mu_ = mu; }
  void restart() {
    counter_ = 0.0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }
  void learn(double& epsilon, double accept) {
    counter_ += 1.0;
    accept = std::min(accept, 1.0);
    const double eta = 1.0 / (counter_ + t0_);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept);
    const double x = mu_ - s_bar_ * std::sqrt(counter_) / gamma_;
    const double x_eta = std::pow(counter_, -kappa_);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    epsilon = std::exp(x);
  }
  double final_epsilon() const { return std::exp(x_bar_); }

 private:
  double delta_, gamma_, kappa_, t0_;
  double mu_ = 0.0;
  double counter_ = 0.0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
};

/// Expanding-window diagonal variance estimation during warmup.
class WindowedVariance {
 public:
  WindowedVariance(std::size_t num_warmup, std::size_t dim) : warmup_(num_warmup) {
    std::size_t init = 75;
    std::size_t term = 50;
    std::size_t base = 25;
    if (num_warmup < 20) {
      enabled_ = false;
    } else if (init + base + term > num_warmup) {
      init = static_cast<std::size_t>(0.15 * static_cast<double>(num_warmup));
      term = static_cast<std::size_t>(0.1 * static_cast<double>(num_warmup));
      base = num_warmup - (init + term);
    }
    init_buffer_ = init;
    term_buffer_ = term;
    window_size_ = base;
    next_window_ = init_buffer_ + window_size_ - 1;
    mean_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    m2_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  }

  /// Returns true when a window closed and `var` was updated.
  bool learn(Eigen::VectorXd& var, const Eigen::VectorXd& q) {
    if (!enabled_) return false;
    if (in_window()) add(q);
    if (end_of_window()) {
      compute_next_window();
      const double n = static_cast<double>(count_);
      Eigen::VectorXd v = m2_ / (n - 1.0);
      v = (n / (n + 5.0)) * v.array() + 1e-3 * (5.0 / (n + 5.0));
      if (!v.allFinite()) throw Error("metric adaptation produced a non-finite variance");
      var = v;
      count_ = 0;
      mean_.setZero();
      m2_.setZero();
      ++counter_;
      return true;
    }
    ++counter_;
    return false;
  }

 private:
  bool in_window() const {
    return counter_ >= init_buffer_ && counter_ + term_buffer_ < warmup_ && counter_ != warmup_;
  }
  bool end_of_window() const { return counter_ == next_window_ && counter_ != warmup_; }
  void compute_next_window() {
    const std::size_t last = warmup_ - term_buffer_ - 1;
    if (next_window_ == last) return;
    window_size_ *= 2;
    next_window_ = counter_ + window_size_;
    if (next_window_ != last && next_window_ + 2 * window_size_ >= warmup_ - term_buffer_) {
      next_window_ = last;
    }
  }
  void add(const Eigen::VectorXd& q) {
    ++count_;
    const Eigen::VectorXd delta = q - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta.cwiseProduct(q - mean_);
  }

  bool enabled_ = true;
  std::size_t warmup_;
  std::size_t init_buffer_ = 0;
  std::size_t term_buffer_ = 0;
  std::size_t window_size_ = 0;
  std::size_t next_window_ = 0;
  std::size_t counter_ = 0;
  std::size_t count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

struct Transition {
  double accept_stat = 0.0;
  int n_leapfrog = 0;
  int depth = 0;
  bool divergent = false;
};

class NutsChain {
 public:
  NutsChain(const LogDensity& model, const NutsSettings& settings, Engine& engine)
      : inv_metric_(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(model.dim()))),
        model_(model),
        settings_(settings),
        engine_(engine) {}

  void initialise(Engine& engine) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      z_.q = model_.initial_point(engine);
      z_.lp = model_.log_density(z_.q, &z_.grad);
      if (std::isfinite(z_.lp) && z_.grad.allFinite()) return;
    }
    throw Error("run_nuts: no finite initial point after 100 attempts");
  }

  double hamiltonian(const PhasePoint& z) const {
    return -z.lp + 0.5 * z.p.dot(inv_metric_.cwiseProduct(z.p));
  }

  Eigen::VectorXd velocity(const PhasePoint& z) const { return inv_metric_.cwiseProduct(z.p); }

  void sample_momentum(PhasePoint& z) {
    std::normal_distribution<double> normal(0.0, 1.0);
    z.p.resize(z.q.size());
    for (Eigen::Index i = 0; i < z.p.size(); ++i) z.p(i) = normal(engine_) / std::sqrt(inv_metric_(i));
  }

  void leapfrog(PhasePoint& z, double eps) const {
    z.p += 0.5 * eps * z.grad;
    z.q += eps * inv_metric_.cwiseProduct(z.p);
    z.lp = model_.log_density(z.q, &z.grad);
    if (!std::isfinite(z.lp) || !z.grad.allFinite()) {
      z.lp = -kInf;
      return;
    }
    z.p += 0.5 * eps * z.grad;
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  void init_stepsize() {
    if (epsilon_ == 0.0 || epsilon_ > 1e7 || std::isnan(epsilon_)) return;
    const PhasePoint init = z_;
    auto trial = [&]() {
      z_ = init;
      sample_momentum(z_);
      const double h0 = hamiltonian(z_);
      leapfrog(z_, epsilon_);
      double h = hamiltonian(z_);
      if (std::isnan(h)) h = kInf;
      return h0 - h;
    };
    const double log_target = std::log(0.8);
    const int direction = trial() > log_target ? 1 : -1;
    while (true) {
      const double delta_h = trial();
      if (direction == 1 && !(delta_h > log_target)) break;
      if (direction == -1 && !(delta_h < log_target)) break;
      epsilon_ = direction == 1 ? 2.0 * epsilon_ : 0.5 * epsilon_;
      if (epsilon_ > 1e7) throw Error("run_nuts: posterior appears improper (step size diverged)");
      if (epsilon_ == 0.0) throw Error("run_nuts: step size collapsed to zero");
    }
    z_ = init;
  }

  static bool criterion(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
                        const Eigen::VectorXd& rho) {
    return p_sharp_plus.dot(rho) > 0.0 && p_sharp_minus.dot(rho) > 0.0;
  }

  bool build_tree(int depth, PhasePoint& z_propose, Eigen::VectorXd& p_sharp_beg,
                  Eigen::VectorXd& p_sharp_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg,
                  Eigen::VectorXd& p_end, double h0, double sign, int& n_leapfrog,
                  double& log_sum_weight, double& sum_metro_prob) {
    if (depth == 0) {
      leapfrog(z_, sign * epsilon_);
      ++n_leapfrog;
      double h = hamiltonian(z_);
      if (std::isnan(h)) h = kInf;
      if (h - h0 > settings_.max_delta_h) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_prob += h0 - h > 0.0 ? 1.0 : std::exp(h0 - h);
      z_propose = z_;
      p_sharp_beg = velocity(z_);
      p_sharp_end = p_sharp_beg;
      rho += z_.p;
      p_beg = z_.p;
      p_end = p_beg;
      return !divergent_;
    }

    const Eigen::Index n = z_.p.size();
    double log_sum_weight_init = -kInf;
    Eigen::VectorXd p_init_end(n);
    Eigen::VectorXd p_sharp_init_end(n);
    Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(n);
    if (!build_tree(depth - 1, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
                    p_init_end, h0, sign, n_leapfrog, log_sum_weight_init, sum_metro_prob)) {
      return false;
    }

    PhasePoint z_propose_final = z_;
    double log_sum_weight_final = -kInf;
    Eigen::VectorXd p_final_beg(n);
    Eigen::VectorXd p_sharp_final_beg(n);
    Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(n);
    if (!build_tree(depth - 1, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
                    p_final_beg, p_end, h0, sign, n_leapfrog, log_sum_weight_final,
                    sum_metro_prob)) {
      return false;
    }

    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = z_propose_final;
    } else if (uniform() < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = z_propose_final;
    }

    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = criterion(p_sharp_beg, p_sharp_end, rho_subtree);
    persist = persist && criterion(p_sharp_beg, p_sharp_final_beg, rho_init + p_final_beg);
    persist = persist && criterion(p_sharp_init_end, p_sharp_end, rho_final + p_init_end);
    return persist;
  }

  Transition transition() {
    sample_momentum(z_);
    const Eigen::Index n = z_.q.size();
    PhasePoint z_fwd = z_;
    PhasePoint z_bck = z_;
    PhasePoint z_sample = z_;
    PhasePoint z_propose = z_;

    Eigen::VectorXd p_fwd_fwd = z_.p, p_fwd_bck = z_.p, p_bck_fwd = z_.p, p_bck_bck = z_.p;
    Eigen::VectorXd p_sharp_fwd_fwd = velocity(z_);
    Eigen::VectorXd p_sharp_fwd_bck = p_sharp_fwd_fwd;
    Eigen::VectorXd p_sharp_bck_fwd = p_sharp_fwd_fwd;
    Eigen::VectorXd p_sharp_bck_bck = p_sharp_fwd_fwd;
    Eigen::VectorXd rho = z_.p;

    double log_sum_weight = 0.0;
    const double h0 = hamiltonian(z_);
    int n_leapfrog = 0;
    double sum_metro_prob = 0.0;
    int depth = 0;
    divergent_ = false;

    while (depth < settings_.max_depth) {
      Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(n);
      Eigen::VectorXd rho_bck = Eigen::VectorXd::Zero(n);
      double log_sum_weight_subtree = -kInf;
      bool valid;
      if (uniform() > 0.5) {
        z_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        p_sharp_bck_fwd = p_sharp_fwd_bck;
        valid = build_tree(depth, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck,
                           p_fwd_fwd, h0, 1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob);
        z_fwd = z_;
      } else {
        z_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        p_sharp_fwd_bck = p_sharp_bck_fwd;
        valid = build_tree(depth, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd,
                           p_bck_bck, h0, -1.0, n_leapfrog, log_sum_weight_subtree,
                           sum_metro_prob);
        z_bck = z_;
      }
      if (!valid) break;
      ++depth;

      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (uniform() < std::exp(log_sum_weight_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

      rho = rho_bck + rho_fwd;
      bool persist = criterion(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      persist = persist && criterion(p_sharp_bck_bck, p_sharp_fwd_bck, rho_bck + p_fwd_bck);
      persist = persist && criterion(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_fwd + p_bck_fwd);
      if (!persist) break;
    }

    Transition t;
    t.n_leapfrog = n_leapfrog;
    t.depth = depth;
    t.divergent = divergent_;
    t.accept_stat = n_leapfrog > 0 ? sum_metro_prob / static_cast<double>(n_leapfrog) : 0.0;
    z_ = z_sample;
    return t;
  }

  PhasePoint z_;
  double epsilon_ = 1.0;
  Eigen::VectorXd inv_metric_;

 private:
  const LogDensity& model_;
  const NutsSettings& settings_;
  Engine& engine_;
  bool divergent_ = false;
};

void run_chain(const LogDensity& model, const NutsSettings& settings, std::size_t chain,
               ChainSet& out, std::size_t extra_columns) {
  using Clock = std::chrono::steady_clock;
  auto& stats = out.stats[chain];
  stats.seed = derive_seed(settings.seed, Stream::kChain, chain);
  Engine engine = make_engine(settings.seed, Stream::kChain, chain);
  NutsChain sampler(model, settings, engine);
  sampler.initialise(engine);

  const auto start = Clock::now();
  DualAveraging adapt(settings.target_accept, 0.05, 0.75, 10.0);
  WindowedVariance variance(settings.warmup, model.dim());
  sampler.init_stepsize();
  adapt.set_mu(std::log(10.0 * sampler.epsilon_));
  adapt.restart();
  for (std::size_t it = 0; it < settings.warmup; ++it) {
    const Transition t = sampler.transition();
    adapt.learn(sampler.epsilon_, t.accept_stat);
    if (variance.learn(sampler.inv_metric_, sampler.z_.q)) {
      sampler.init_stepsize();
      adapt.set_mu(std::log(10.0 * sampler.epsilon_));
      adapt.restart();
    }
    if (settings.progress) settings.progress(chain, it);
  }
  sampler.epsilon_ = adapt.final_epsilon();
  const auto mid = Clock::now();

  const std::size_t n_out = out.num_columns() - extra_columns;
  for (std::size_t it = 0; it < settings.samples; ++it) {
    const Transition t = sampler.transition();
    const Eigen::VectorXd values = model.outputs(sampler.z_.q);
    for (std::size_t j = 0; j < n_out; ++j) out.at(chain, it, j) = values(static_cast<Eigen::Index>(j));
    out.at(chain, it, n_out) = sampler.z_.lp;
    out.at(chain, it, n_out + 1) = t.accept_stat;
    out.at(chain, it, n_out + 2) = t.n_leapfrog;
    out.at(chain, it, n_out + 3) = t.depth;
    out.at(chain, it, n_out + 4) = t.divergent ? 1.0 : 0.0;
    stats.leapfrog_steps += static_cast<std::size_t>(t.n_leapfrog);
    if (t.divergent) ++stats.divergences;
    if (settings.progress) settings.progress(chain, settings.warmup + it);
  }
  const auto end = Clock::now();

  stats.warmup_seconds = std::chrono::duration<double>(mid - start).count();
  stats.sampling_seconds = std::chrono::duration<double>(end - mid).count();
  stats.step_size = sampler.epsilon_;
  stats.inv_metric.assign(sampler.inv_metric_.data(),
                          sampler.inv_metric_.data() + sampler.inv_metric_.size());
}

}  // namespace

ChainSet run_nuts(const LogDensity& model, const NutsSettings& settings) {
  settings.validate();
  auto columns = model.output_names();
  const std::vector<std::string> extra{"__lp", "__accept_stat", "__n_leapfrog", "__tree_depth",
                                       "__divergent"};
  columns.insert(columns.end(), extra.begin(), extra.end());
  ChainSet out(std::move(columns), settings.chains, settings.warmup, settings.samples);
  out.root_seed = settings.seed;

  unsigned threads = settings.threads;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, settings.chains));

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(settings.chains);
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&]() {
        for (std::size_t c = next++; c < settings.chains; c = next++) {
          try {
            run_chain(model, settings, c, out, extra.size());
          } catch (...) {
            errors[c] = std::current_exception();
          }
        }
      });
    }
  }
  for (std::size_t c = 0; c < settings.chains; ++c) {
    if (errors[c]) {
      try {
        std::rethrow_exception(errors[c]);
      } catch (const std::exception& e) {
        throw Error("chain " + std::to_string(c) + ": " + e.what());
      }
    }
  }
  out.unreliable = out.divergence_rate() > settings.unreliable_divergence_rate;
  return out;
}

ChainSet run_nuts(const ModelSpec& spec, const NutsSettings& settings) {
  const auto model = make_model(spec);
  ChainSet out = run_nuts(*model, settings);
  out.model = to_string(spec.kind);
  return out;
}

LeapfrogTiming time_leapfrog(const LogDensity& model, std::size_t steps, double step_size,
                             std::uint64_t seed) {
  if (steps == 0) throw Error("time_leapfrog: steps must be positive");
  Engine engine = make_engine(seed, Stream::kChain, 0);
  NutsSettings settings;
  NutsChain chain(model, settings, engine);
  chain.initialise(engine);
  chain.sample_momentum(chain.z_);
  std::vector<double> seconds;
  seconds.reserve(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    chain.leapfrog(chain.z_, step_size);
    const auto t1 = std::chrono::steady_clock::now();
    seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
    if (!std::isfinite(chain.z_.lp)) {
      chain.initialise(engine);
      chain.sample_momentum(chain.z_);
    }
  }
  std::sort(seconds.begin(), seconds.end());
  LeapfrogTiming r;
  r.steps = steps;
  r.median_seconds = steps % 2 == 1 ? seconds[steps / 2]
                                    : 0.5 * (seconds[steps / 2 - 1] + seconds[steps / 2]);
  return r;
}

}  // namespace aggvae::inference
