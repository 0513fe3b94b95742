#include "cli/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>

#include "aggvae/container.hpp"
#include "aggvae/error.hpp"
#include "aggvae/rng.hpp"

namespace aggvae::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE) {
    throw Error("expected a number, got '" + v + "'");
  }
  return x;
}

long long to_integer(const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE) {
    throw Error("expected an integer, got '" + v + "'");
  }
  return x;
}

std::uint64_t to_u64(const std::string& v) {
  errno = 0;
  char* end = nullptr;
  if (!v.empty() && v[0] == '-') throw Error("expected a non-negative integer, got '" + v + "'");
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE) {
    throw Error("expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

template <typename T>
T positive_count(const std::string& v) {
  const long long x = to_integer(v);
  if (x < 1) throw Error("expected a positive integer, got '" + v + "'");
  return static_cast<T>(x);
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error("expected true or false, got '" + v + "'");
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<int> to_int_list(const std::string& v) {
  std::vector<int> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const long long x = to_integer(trim(item));
    if (x < 1) throw Error("layer widths must be positive");
    out.push_back(static_cast<int>(x));
  }
  return out;
}

std::string from_int_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

geometry::BoundingBox to_box(const std::string& v) {
  std::stringstream ss(v);
  std::string item;
  std::vector<double> xs;
  while (std::getline(ss, item, ',')) xs.push_back(to_double(trim(item)));
  if (xs.size() != 4) throw Error("extent needs xmin,ymin,xmax,ymax");
  geometry::BoundingBox b{xs[0], xs[1], xs[2], xs[3]};
  if (!(b.width() > 0.0 && b.height() > 0.0)) throw Error("extent has zero area");
  return b;
}

struct Key {
  std::string name;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"seed", [](auto& c, const auto& v) { c.seed = to_u64(v); },
       [](const auto& c) { return c.seed ? std::to_string(*c.seed) : std::string(); }},
      {"out_dir", [](auto& c, const auto& v) { c.out_dir = v; },
       [](const auto& c) { return c.out_dir.string(); }},
      {"boundaries_old", [](auto& c, const auto& v) { c.boundaries_old = v; },
       [](const auto& c) { return c.boundaries_old.string(); }},
      {"boundaries_new", [](auto& c, const auto& v) { c.boundaries_new = v; },
       [](const auto& c) { return c.boundaries_new.string(); }},
      {"data_old", [](auto& c, const auto& v) { c.data_old = v; },
       [](const auto& c) { return c.data_old.string(); }},
      {"data_new", [](auto& c, const auto& v) { c.data_new = v; },
       [](const auto& c) { return c.data_new.string(); }},
      {"truth", [](auto& c, const auto& v) { c.truth = v; },
       [](const auto& c) { return c.truth.string(); }},
      {"decoder", [](auto& c, const auto& v) { c.decoder = v; },
       [](const auto& c) { return c.decoder.string(); }},
      {"grid_resolution",
       [](auto& c, const auto& v) {
         c.grid_resolution = static_cast<int>(to_integer(v));
         if (c.grid_resolution < 2) throw Error("grid_resolution must be at least 2");
       },
       [](const auto& c) { return std::to_string(c.grid_resolution); }},
      {"threads", [](auto& c, const auto& v) { c.threads = static_cast<unsigned>(to_u64(v)); },
       [](const auto& c) { return std::to_string(c.threads); }},
      {"hyperprior.lengthscale_shape",
       [](auto& c, const auto& v) { c.hyperpriors.lengthscale_shape = to_double(v); },
       [](const auto& c) { return num(c.hyperpriors.lengthscale_shape); }},
      {"hyperprior.lengthscale_scale",
       [](auto& c, const auto& v) { c.hyperpriors.lengthscale_scale = to_double(v); },
       [](const auto& c) { return num(c.hyperpriors.lengthscale_scale); }},
      {"hyperprior.sigma_scale",
       [](auto& c, const auto& v) { c.hyperpriors.sigma_scale = to_double(v); },
       [](const auto& c) { return num(c.hyperpriors.sigma_scale); }},
      {"prior.intercept_sd", [](auto& c, const auto& v) { c.intercept_sd = to_double(v); },
       [](const auto& c) { return num(c.intercept_sd); }},
      {"prior.s_scale", [](auto& c, const auto& v) { c.s_scale = to_double(v); },
       [](const auto& c) { return num(c.s_scale); }},
      {"synth.rows_old", [](auto& c, const auto& v) { c.synth.rows_old = positive_count<int>(v); },
       [](const auto& c) { return std::to_string(c.synth.rows_old); }},
      {"synth.cols_old", [](auto& c, const auto& v) { c.synth.cols_old = positive_count<int>(v); },
       [](const auto& c) { return std::to_string(c.synth.cols_old); }},
      {"synth.rows_new", [](auto& c, const auto& v) { c.synth.rows_new = positive_count<int>(v); },
       [](const auto& c) { return std::to_string(c.synth.rows_new); }},
      {"synth.cols_new", [](auto& c, const auto& v) { c.synth.cols_new = positive_count<int>(v); },
       [](const auto& c) { return std::to_string(c.synth.cols_new); }},
      {"synth.extent", [](auto& c, const auto& v) { c.synth.extent = to_box(v); },
       [](const auto& c) {
         const auto& e = c.synth.extent;
         return num(e.xmin) + "," + num(e.ymin) + "," + num(e.xmax) + "," + num(e.ymax);
       }},
      {"synth.b0", [](auto& c, const auto& v) { c.synth.b0 = to_double(v); },
       [](const auto& c) { return num(c.synth.b0); }},
      {"synth.variance", [](auto& c, const auto& v) { c.synth.variance = to_double(v); },
       [](const auto& c) { return num(c.synth.variance); }},
      {"synth.lengthscale", [](auto& c, const auto& v) { c.synth.lengthscale = to_double(v); },
       [](const auto& c) { return num(c.synth.lengthscale); }},
      {"synth.zero_field", [](auto& c, const auto& v) { c.synth.zero_field = to_bool(v); },
       [](const auto& c) { return std::string(c.synth.zero_field ? "true" : "false"); }},
      {"synth.tests_per_unit",
       [](auto& c, const auto& v) { c.synth.tests_per_unit = positive_count<std::int64_t>(v); },
       [](const auto& c) { return std::to_string(c.synth.tests_per_unit); }},
      {"synth.test_skew", [](auto& c, const auto& v) { c.synth.test_skew = to_double(v); },
       [](const auto& c) { return num(c.synth.test_skew); }},
      {"vae.hidden", [](auto& c, const auto& v) { c.vae.hidden = to_int_list(v); },
       [](const auto& c) { return from_int_list(c.vae.hidden); }},
      {"vae.latent_dim",
       [](auto& c, const auto& v) { c.vae.latent_dim = static_cast<int>(to_integer(v)); },
       [](const auto& c) { return std::to_string(c.vae.latent_dim); }},
      {"vae.activation",
       [](auto& c, const auto& v) {
         if (v != "tanh" && v != "relu") throw Error("activation must be tanh or relu");
         c.vae.activation = v;
       },
       [](const auto& c) { return c.vae.activation; }},
      {"vae.epochs", [](auto& c, const auto& v) { c.vae.epochs = positive_count<int>(v); },
       [](const auto& c) { return std::to_string(c.vae.epochs); }},
      {"vae.batch_size", [](auto& c, const auto& v) { c.vae.batch_size = positive_count<int>(v); },
       [](const auto& c) { return std::to_string(c.vae.batch_size); }},
      {"vae.learning_rate", [](auto& c, const auto& v) { c.vae.learning_rate = to_double(v); },
       [](const auto& c) { return num(c.vae.learning_rate); }},
      {"vae.final_lr_ratio", [](auto& c, const auto& v) { c.vae.final_lr_ratio = to_double(v); },
       [](const auto& c) { return num(c.vae.final_lr_ratio); }},
      {"vae.noise_sigma", [](auto& c, const auto& v) { c.vae.noise_sigma = to_double(v); },
       [](const auto& c) { return num(c.vae.noise_sigma); }},
      {"vae.training_size",
       [](auto& c, const auto& v) { c.vae.training_size = positive_count<std::size_t>(v); },
       [](const auto& c) { return std::to_string(c.vae.training_size); }},
      {"mcmc.chains", [](auto& c, const auto& v) { c.mcmc.chains = positive_count<std::size_t>(v); },
       [](const auto& c) { return std::to_string(c.mcmc.chains); }},
      {"mcmc.warmup", [](auto& c, const auto& v) { c.mcmc.warmup = positive_count<std::size_t>(v); },
       [](const auto& c) { return std::to_string(c.mcmc.warmup); }},
      {"mcmc.samples",
       [](auto& c, const auto& v) { c.mcmc.samples = positive_count<std::size_t>(v); },
       [](const auto& c) { return std::to_string(c.mcmc.samples); }},
      {"mcmc.target_accept", [](auto& c, const auto& v) { c.mcmc.target_accept = to_double(v); },
       [](const auto& c) { return num(c.mcmc.target_accept); }},
      {"mcmc.max_depth", [](auto& c, const auto& v) { c.mcmc.max_depth = positive_count<int>(v); },
       [](const auto& c) { return std::to_string(c.mcmc.max_depth); }},
      {"mcmc.threads",
       [](auto& c, const auto& v) { c.mcmc.threads = static_cast<unsigned>(to_u64(v)); },
       [](const auto& c) { return std::to_string(c.mcmc.threads); }},
  };
  return table;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

PipelineConfig parse_config(const std::string& text, const std::string& origin) {
  PipelineConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(number);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = keys();
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const Key& k) { return k.name == key; });
    if (it == table.end()) throw Error(where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw Error(where + ": key '" + key + "' given twice");
    try {
      it->set(config, value);
    } catch (const Error& e) {
      throw Error(where + ": " + key + ": " + e.what());
    }
  }
  config.hyperpriors.validate();
  return config;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("config file " + path.string() + " does not exist");
  return parse_config(read_text_file(path), path.string());
}

namespace {

std::filesystem::path or_default(const std::filesystem::path& set, const std::filesystem::path& dir,
                                 const char* name) {
  return set.empty() ? dir / name : set;
}

}  // namespace

std::filesystem::path PipelineConfig::boundaries_old_path() const {
  return or_default(boundaries_old, out_dir, "boundaries_old.geojson");
}
std::filesystem::path PipelineConfig::boundaries_new_path() const {
  return or_default(boundaries_new, out_dir, "boundaries_new.geojson");
}
std::filesystem::path PipelineConfig::data_old_path() const {
  return or_default(data_old, out_dir, "data_old.csv");
}
std::filesystem::path PipelineConfig::data_new_path() const {
  return or_default(data_new, out_dir, "data_new.csv");
}
std::filesystem::path PipelineConfig::truth_path() const {
  return or_default(truth, out_dir, "truth.csv");
}
std::filesystem::path PipelineConfig::decoder_path() const {
  return or_default(decoder, out_dir, "decoder.bin");
}
std::filesystem::path PipelineConfig::draws_path(const std::string& model) const {
  return out_dir / ("draws_" + model + ".bin");
}

std::uint64_t PipelineConfig::require_seed() const {
  if (!seed) throw Error("a root seed is required (config key 'seed' or --seed)");
  return *seed;
}

std::string PipelineConfig::canonical() const {
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& k : keys()) {
    // Output location and thread counts are excluded.
    if (k.name == "out_dir" || k.name == "threads" || k.name == "mcmc.threads") continue;
    rows.emplace_back(k.name, k.get(*this));
  }
  std::sort(rows.begin(), rows.end());
  std::string out;
  for (const auto& [k, v] : rows) out += k + " = " + v + "\n";
  return out;
}

std::string PipelineConfig::hash() const {
  const std::string c = canonical();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(c.data(), c.size())));
  return buf;
}

std::map<std::string, std::string> PipelineConfig::provenance(
    const std::map<std::string, std::string>& extra) const {
  std::map<std::string, std::string> p = extra;
  p["config_hash"] = hash();
  p["seed"] = seed ? std::to_string(*seed) : std::string("unset");
  return p;
}

}  // namespace aggvae::cli
