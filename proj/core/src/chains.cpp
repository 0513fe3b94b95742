#include "aggvae/chains.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "aggvae/container.hpp"
#include "aggvae/diagnostics.hpp"
#include "aggvae/error.hpp"

namespace aggvae::inference {

namespace {

constexpr std::string_view kMagic = "AGGVAEDR";
constexpr int kVersion = 1;

}  // namespace

ChainSet::ChainSet(std::vector<std::string> columns, std::size_t chains, std::size_t warmup,
                   std::size_t samples)
    : columns_(std::move(columns)),
      chains_(chains),
      warmup_(warmup),
      samples_(samples),
      data_(chains * samples * columns_.size(), 0.0) {
  stats.resize(chains);
}

double& ChainSet::at(std::size_t chain, std::size_t iter, std::size_t col) {
  return data_[(chain * samples_ + iter) * columns_.size() + col];
}

double ChainSet::at(std::size_t chain, std::size_t iter, std::size_t col) const {
  return data_[(chain * samples_ + iter) * columns_.size() + col];
}

bool ChainSet::has_column(const std::string& name) const {
  return std::find(columns_.begin(), columns_.end(), name) != columns_.end();
}

std::size_t ChainSet::column_index(const std::string& name) const {
  const auto it = std::find(columns_.begin(), columns_.end(), name);
  if (it == columns_.end()) throw Error("draws have no column '" + name + "'");
  return static_cast<std::size_t>(it - columns_.begin());
}

Eigen::MatrixXd ChainSet::column(std::size_t col) const {
  if (col >= columns_.size()) throw Error("column index out of range");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(samples_), static_cast<Eigen::Index>(chains_));
  for (std::size_t c = 0; c < chains_; ++c) {
    for (std::size_t i = 0; i < samples_; ++i) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = at(c, i, col);
    }
  }
  return m;
}

Eigen::MatrixXd ChainSet::column(const std::string& name) const {
  return column(column_index(name));
}

std::vector<std::size_t> ChainSet::indexed_columns(const std::string& prefix) const {
  std::vector<std::size_t> out;
  const std::string stem = prefix + "[";
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    if (columns_[j].rfind(stem, 0) == 0) out.push_back(j);
  }
  return out;
}

double ChainSet::divergence_rate() const {
  if (chains_ == 0 || samples_ == 0) return 0.0;
  std::size_t total = 0;
  for (const auto& s : stats) total += s.divergences;
  return static_cast<double>(total) / static_cast<double>(chains_ * samples_);
}

std::filesystem::path timing_path(const std::filesystem::path& draws_path) {
  auto p = draws_path;
  p += ".timing.json";
  return p;
}

void save_draws(const std::filesystem::path& path, const ChainSet& set) {
  nlohmann::ordered_json header;
  header["format"] = "aggvae-draws";
  header["version"] = kVersion;
  header["model"] = set.model;
  header["columns"] = set.columns();
  header["chains"] = set.chains();
  header["warmup"] = set.warmup();
  header["samples"] = set.samples();
  header["layout"] = "chain-major, iteration-major, columns innermost, f64 little-endian";
  header["root_seed"] = set.root_seed;
  header["unreliable"] = set.unreliable;
  header["wall_clock_file"] = timing_path(path).filename().string();
  auto& chains = header["chain_info"] = nlohmann::ordered_json::array();
  for (const auto& s : set.stats) {
    nlohmann::ordered_json c;
    c["seed"] = s.seed;
    c["step_size"] = s.step_size;
    c["divergences"] = s.divergences;
    c["leapfrog_steps"] = s.leapfrog_steps;
    c["inv_metric"] = s.inv_metric;
    chains.push_back(std::move(c));
  }
  header["provenance"] = set.provenance;
  write_container(path, kMagic, header.dump(), set.data());

  nlohmann::ordered_json timing;
  auto& per_chain = timing["chains"] = nlohmann::ordered_json::array();
  for (const auto& s : set.stats) {
    per_chain.push_back({{"warmup_seconds", s.warmup_seconds},
                         {"sampling_seconds", s.sampling_seconds}});
  }
  write_text_file(timing_path(path), timing.dump(2) + "\n");
}

ChainSet load_draws(const std::filesystem::path& path) {
  auto container = read_container(path, kMagic);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(container.header_json);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": malformed draw header: " + e.what());
  }
  try {
    if (header.at("format") != "aggvae-draws") throw Error(path.string() + ": not a draw file");
    ChainSet set(header.at("columns").get<std::vector<std::string>>(),
                 header.at("chains").get<std::size_t>(), header.at("warmup").get<std::size_t>(),
                 header.at("samples").get<std::size_t>());
    if (container.body.size() != set.data().size()) {
      throw Error(path.string() + ": body has " + std::to_string(container.body.size()) +
                  " values, header implies " + std::to_string(set.data().size()));
    }
    set.data() = std::move(container.body);
    set.model = header.value("model", "");
    set.root_seed = header.value("root_seed", std::uint64_t{0});
    set.unreliable = header.value("unreliable", false);
    if (header.contains("provenance")) {
      set.provenance = header["provenance"].get<std::map<std::string, std::string>>();
    }
    const auto& info = header.at("chain_info");
    for (std::size_t c = 0; c < set.chains() && c < info.size(); ++c) {
      auto& s = set.stats[c];
      s.seed = info[c].at("seed").get<std::uint64_t>();
      s.step_size = info[c].at("step_size").get<double>();
      s.divergences = info[c].at("divergences").get<std::size_t>();
      s.leapfrog_steps = info[c].at("leapfrog_steps").get<std::size_t>();
      s.inv_metric = info[c].at("inv_metric").get<std::vector<double>>();
    }
    const auto tpath = timing_path(path);
    if (std::filesystem::exists(tpath)) {
      const auto timing = nlohmann::json::parse(read_text_file(tpath));
      const auto& tc = timing.at("chains");
      for (std::size_t c = 0; c < set.chains() && c < tc.size(); ++c) {
        set.stats[c].warmup_seconds = tc[c].at("warmup_seconds").get<double>();
        set.stats[c].sampling_seconds = tc[c].at("sampling_seconds").get<double>();
      }
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": invalid draw header: " + e.what());
  }
}

PrevalenceSummary posterior_prevalence(const ChainSet& set) {
  if (set.samples() == 0 || set.chains() == 0) throw Error("posterior_prevalence: no draws");
  auto summarise = [&](const std::string& prefix) {
    std::vector<UnitSummary> out;
    for (const auto j : set.indexed_columns(prefix)) {
      const Eigen::MatrixXd m = set.column(j);
      std::vector<double> pooled(m.data(), m.data() + m.size());
      UnitSummary u;
      u.name = set.columns()[j];
      u.mean = m.mean();
      std::sort(pooled.begin(), pooled.end());
      u.q025 = diagnostics::quantile_sorted(pooled, 0.025);
      u.q975 = diagnostics::quantile_sorted(pooled, 0.975);
      out.push_back(std::move(u));
    }
    return out;
  };
  PrevalenceSummary s;
  s.old_units = summarise("theta_old");
  s.new_units = summarise("theta_new");
  if (s.old_units.empty() && s.new_units.empty()) {
    throw Error("posterior_prevalence: draws carry no theta columns");
  }
  return s;
}

}  // namespace aggvae::inference
