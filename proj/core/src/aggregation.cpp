#include "aggvae/aggregation.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>
#include <vector>

#include "aggvae/container.hpp"
#include "aggvae/error.hpp"

namespace aggvae::aggregation {

AggregateVector aggregate(const Eigen::VectorXd& f,
                          const geometry::MembershipMatrix& m, double cell_area) {
  if (static_cast<std::size_t>(f.size()) != m.cols()) {
    throw Error("aggregate: f has length " + std::to_string(f.size()) +
                " but membership matrix has " + std::to_string(m.cols()) + " columns");
  }
  AggregateVector out;
  out.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.rows()));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sum = 0.0;
    for (std::size_t j : m.members(i)) sum += f(static_cast<Eigen::Index>(j));
    out.values(static_cast<Eigen::Index>(i)) = sum;
  }
  out.cell_area = cell_area;
  out.polygon_set_name = m.polygon_set_name();
  return out;
}

AggregateVector aggregate(const priors::MvnSample& f,
                          const geometry::MembershipMatrix& m, double cell_area) {
  return aggregate(f.values, m, cell_area);
}

Eigen::VectorXd scatter(const Eigen::VectorXd& per_polygon,
                        const geometry::MembershipMatrix& m) {
  if (static_cast<std::size_t>(per_polygon.size()) != m.rows()) {
    throw Error("scatter: dimension mismatch");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.cols()));
  for (std::size_t j = 0; j < m.cols(); ++j) {
    const int o = m.owner(j);
    if (o >= 0) out(static_cast<Eigen::Index>(j)) = per_polygon(o);
  }
  return out;
}

JointAggregate joint_aggregate(const Eigen::VectorXd& f,
                               const geometry::MembershipMatrix& m_old,
                               const geometry::MembershipMatrix& m_new) {
  if (m_old.grid_id() != m_new.grid_id()) {
    throw Error("joint_aggregate: membership matrices were built on different grids ('" +
                m_old.grid_id() + "' vs '" + m_new.grid_id() + "')");
  }
  const AggregateVector a = aggregate(f, m_old);
  const AggregateVector b = aggregate(f, m_new);
  JointAggregate j;
  j.k1 = m_old.rows();
  j.k2 = m_new.rows();
  j.values.resize(static_cast<Eigen::Index>(j.k1 + j.k2));
  j.values << a.values, b.values;
  return j;
}

JointAggregate joint_aggregate(const priors::MvnSample& f,
                               const geometry::MembershipMatrix& m_old,
                               const geometry::MembershipMatrix& m_new) {
  return joint_aggregate(f.values, m_old, m_new);
}

JointAggregate TrainingSet::at(std::size_t i) const {
  return {samples.col(static_cast<Eigen::Index>(i)), k1, k2};
}

TrainingSet generate_training_set(const geometry::Grid& grid,
                                  const geometry::MembershipMatrix& m_old,
                                  const geometry::MembershipMatrix& m_new,
                                  const priors::HyperPriorSpec& hp,
                                  const TrainingSetOptions& options) {
  if (options.count < 1) throw Error("training set count must be >= 1");
  if (m_old.cols() != grid.size() || m_new.cols() != grid.size()) {
    throw Error("membership matrices do not match the grid");
  }
  if (m_old.grid_id() != m_new.grid_id()) throw Error("membership grid mismatch");
  hp.validate();

  const Eigen::MatrixXd d2 = priors::squared_distances(grid);
  const auto n = static_cast<Eigen::Index>(grid.size());
  TrainingSet set;
  set.k1 = m_old.rows();
  set.k2 = m_new.rows();
  set.root_seed = options.seed;
  set.samples.resize(static_cast<Eigen::Index>(set.k1 + set.k2),
                     static_cast<Eigen::Index>(options.count));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= options.count) return;
      try {
        Engine engine = make_engine(options.seed, Stream::kTrainingDraw, i);
        const priors::KernelSpec kernel = priors::sample_hyperparameters(hp, engine);
        const auto chol = priors::jittered_cholesky(priors::rbf_covariance(d2, kernel));
        const Eigen::VectorXd f = chol.lower * priors::standard_normal(n, engine);
        set.samples.col(static_cast<Eigen::Index>(i)) =
            joint_aggregate(f, m_old, m_new).values;
      } catch (const std::exception& e) {
        std::lock_guard lock(failure_mutex);
        if (!failure) {
          failure = std::make_exception_ptr(
              Error("training draw " + std::to_string(i) + ": " + e.what()));
        }
        next.store(options.count);
        return;
      }
    }
  };
  unsigned threads = options.threads ? options.threads : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(options.count)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return set;
}

void save_training_set(const std::filesystem::path& path, const TrainingSet& set) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string());
  write_u64_le(out, set.count());
  write_u64_le(out, set.k1);
  write_u64_le(out, set.k2);
  write_u64_le(out, set.root_seed);
  write_f64_le(out, std::span<const double>(set.samples.data(),
                                            static_cast<std::size_t>(set.samples.size())));
}

TrainingSet load_training_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  TrainingSet set;
  const std::uint64_t count = read_u64_le(in);
  set.k1 = read_u64_le(in);
  set.k2 = read_u64_le(in);
  set.root_seed = read_u64_le(in);
  if (count == 0 || set.k1 + set.k2 == 0 || count * (set.k1 + set.k2) > (1ULL << 34)) {
    throw Error(path.string() + ": implausible training set header");
  }
  set.samples.resize(static_cast<Eigen::Index>(set.k1 + set.k2),
                     static_cast<Eigen::Index>(count));
  read_f64_le(in, std::span<double>(set.samples.data(),
                                    static_cast<std::size_t>(set.samples.size())));
  return set;
}

std::string training_set_to_text(const TrainingSet& set) {
  std::string out = std::to_string(set.count()) + " " + std::to_string(set.k1) + " " +
                    std::to_string(set.k2) + " " + std::to_string(set.root_seed) + "\n";
  char buf[32];
  for (Eigen::Index i = 0; i < set.samples.cols(); ++i) {
    for (Eigen::Index k = 0; k < set.samples.rows(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", set.samples(k, i));
      if (k > 0) out.push_back(' ');
      out += buf;
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace aggvae::aggregation
