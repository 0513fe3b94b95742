#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "aggvae/chains.hpp"
#include "aggvae/container.hpp"
#include "aggvae/error.hpp"
#include "aggvae/vae.hpp"
#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "support.hpp"

using namespace aggvae;
using namespace aggvae::cli;
namespace fs = std::filesystem;

namespace {

std::string small_config(const fs::path& out, std::uint64_t seed = 17) {
  std::ostringstream s;
  s << "seed = " << seed << "\n"
    << "out_dir = " << out.string() << "\n"
    << "grid_resolution = 8\n"
    << "vae.epochs = 4\n"
    << "vae.training_size = 300\n"
    << "vae.batch_size = 64\n"
    << "mcmc.chains = 2\n"
    << "mcmc.warmup = 40\n"
    << "mcmc.samples = 30\n"
    << "mcmc.threads = 1\n";
  return s.str();
}

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

// Minimal XML check: balanced element nesting and quoted attributes.
bool well_formed_xml(const std::string& text) {
  std::vector<std::string> stack;
  std::size_t pos = 0;
  bool root_seen = false;
  while ((pos = text.find('<', pos)) != std::string::npos) {
    const auto end = text.find('>', pos);
    if (end == std::string::npos) return false;
    std::string tag = text.substr(pos + 1, end - pos - 1);
    pos = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (std::count(tag.begin(), tag.end(), '"') % 2 != 0) return false;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    const bool self_closing = tag.back() == '/';
    const std::string name = tag.substr(0, tag.find_first_of(" \t\n/"));
    if (stack.empty() && root_seen) return false;
    root_seen = true;
    if (!self_closing) stack.push_back(name);
  }
  return root_seen && stack.empty();
}

// Fill colours of the main map, which precedes the crude-estimate panel.
std::vector<std::string> fills(const std::string& svg, std::size_t units) {
  std::vector<std::string> out;
  const std::regex re("<path d=\"[^\"]*\" fill=\"(#[0-9a-f]{6})\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator();
       ++it) {
    out.push_back((*it)[1]);
  }
  if (out.size() > units) out.resize(units);
  return out;
}

struct Pipeline {
  fs::path dir;
  PipelineConfig config;
};

// Shared synth + encode run, reused by later cases.
const Pipeline& encoded() {
  static const Pipeline p = [] {
    Pipeline q;
    q.dir = testing::scratch_dir("cli_pipeline");
    q.config = parse_config(small_config(q.dir / "out"));
    std::ostringstream log;
    REQUIRE(cmd_synth(q.config, log) == kExitOk);
    REQUIRE(cmd_encode(q.config, log) == kExitOk);
    return q;
  }();
  return p;
}

}  // namespace

TEST_CASE("config parsing: values, comments, and errors name the line") {
  const auto c = parse_config("seed = 5  # root\n\nvae.hidden = 8, 6\nmcmc.chains=3\n");
  CHECK(c.require_seed() == 5);
  CHECK(c.vae.hidden == std::vector<int>{8, 6});
  CHECK(c.mcmc.chains == 3);
  CHECK(c.grid_resolution == 12);

  CHECK_THROWS_WITH_AS(parse_config("seed = 1\nbogus = 2\n", "f.cfg"),
                       doctest::Contains("f.cfg:2: unknown key 'bogus'"), Error);
  CHECK_THROWS_WITH_AS(parse_config("seed = 1\nseed = 2\n"), doctest::Contains("given twice"),
                       Error);
  CHECK_THROWS_WITH_AS(parse_config("mcmc.chains = two\n"), doctest::Contains("<config>:1"),
                       Error);
  CHECK_THROWS_AS(parse_config("no equals sign\n"), Error);
  CHECK_THROWS_AS(parse_config("synth.extent = 0,0,1\n"), Error);
  CHECK_THROWS_AS(parse_config("mcmc.samples = 0\n"), Error);
  CHECK_THROWS_AS(parse_config("seed = -3\n"), Error);

  PipelineConfig none;
  CHECK_THROWS_WITH_AS(none.require_seed(), doctest::Contains("root seed is required"), Error);
}

TEST_CASE("config canonical form and hash are stable") {
  const auto a = parse_config("seed = 1\nvae.epochs = 10\n");
  const auto b = parse_config("vae.epochs = 10\n# comment\nseed = 1\n");
  CHECK(a.canonical() == b.canonical());
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 16);
  CHECK(parse_config("seed = 2\nvae.epochs = 10\n").hash() != a.hash());
  // Canonical text parses back to the same configuration.
  CHECK(parse_config(a.canonical()).canonical() == a.canonical());
  CHECK(a.provenance().at("seed") == "1");
  CHECK(config_keys().size() >= 30);
}

TEST_CASE("synth writes every file, creates the directory, and is reproducible") {
  const auto dir = testing::scratch_dir("cli_synth");
  const auto config = parse_config(small_config(dir / "nested" / "out"));
  std::ostringstream log;
  CHECK(cmd_synth(config, log) == kExitOk);
  const std::vector<std::string> files{"boundaries_old.geojson", "boundaries_new.geojson",
                                       "data_old.csv",           "data_new.csv",
                                       "truth.csv",              "provenance.json"};
  std::map<std::string, std::string> first;
  for (const auto& f : files) {
    const fs::path p = config.out_dir / f;
    REQUIRE(fs::is_regular_file(p));
    first[f] = read_text_file(p);
  }
  CHECK(data_lines(first["data_old.csv"]).size() == 1 + 4);
  CHECK(data_lines(first["data_new.csv"]).size() == 1 + 9);
  CHECK(data_lines(first["truth.csv"]).size() == 1 + 13);
  CHECK(first["provenance.json"].find(config.hash()) != std::string::npos);
  CHECK(first["data_old.csv"].rfind("# ", 0) == 0);

  CHECK(cmd_synth(config, log) == kExitOk);
  for (const auto& f : files) CHECK(read_text_file(config.out_dir / f) == first[f]);

  const auto other = parse_config(small_config(dir / "other", 18));
  CHECK(cmd_synth(other, log) == kExitOk);
  CHECK(read_text_file(other.out_dir / "data_new.csv") != first["data_new.csv"]);
}

TEST_CASE("encode writes a decoder matching the boundaries and a loss trace") {
  const auto& p = encoded();
  const auto w = vae::load_decoder(p.config.decoder_path());
  CHECK(w.k1 == 4);
  CHECK(w.k2 == 9);
  CHECK(w.latent_dim() == 4);
  CHECK(w.provenance.root_seed == 17);
  CHECK(w.provenance.extra.at("config_hash") == p.config.hash());
  const auto trace = data_lines(read_text_file(p.config.out_dir / "loss_trace.csv"));
  REQUIRE(!trace.empty());
  CHECK(trace.front() == "loss");
  CHECK(trace.size() == 1 + 4);
}

TEST_CASE("encode reports polygons without grid points") {
  const auto dir = testing::scratch_dir("cli_coverage");
  auto config = parse_config(small_config(dir / "out"));
  std::ostringstream log;
  REQUIRE(cmd_synth(config, log) == kExitOk);
  config.grid_resolution = 2;
  CHECK_THROWS_WITH_AS(cmd_encode(config, log), doctest::Contains("has no grid point"), Error);
}

TEST_CASE("infer: draw count, determinism, and model mismatch") {
  const auto& p = encoded();
  std::ostringstream log;
  for (auto model : {inference::ModelKind::kAggVae, inference::ModelKind::kAggGp}) {
    const auto name = inference::to_string(model);
    const int code = cmd_infer(p.config, model, log);
    CHECK((code == kExitOk || code == kExitWarnings));
    const fs::path draws = p.config.draws_path(name);
    const auto set = inference::load_draws(draws);
    CHECK(set.chains() == 2);
    CHECK(set.samples() == 30);
    CHECK(set.indexed_columns("theta_old").size() == 4);
    CHECK(set.indexed_columns("theta_new").size() == 9);
    CHECK(fs::is_regular_file(p.config.out_dir / ("diagnostics_" + name + ".csv")));

    const std::string bytes = read_text_file(draws);
    const int again = cmd_infer(p.config, model, log);
    CHECK(again == code);
    CHECK(read_text_file(draws) == bytes);
  }

  // A decoder for other boundaries is rejected.
  const auto dir = testing::scratch_dir("cli_mismatch");
  auto other = parse_config(small_config(dir / "out"));
  other.synth.rows_new = 2;
  other.synth.cols_new = 4;
  REQUIRE(cmd_synth(other, log) == kExitOk);
  other.decoder = p.config.decoder_path();
  CHECK_THROWS_AS(cmd_infer(other, inference::ModelKind::kAggVae, log), Error);
}

TEST_CASE("render: well-formed maps, scatter rows, and uniform colouring") {
  const auto& p = encoded();
  std::ostringstream log;
  if (!fs::exists(p.config.draws_path("aggvae"))) {
    cmd_infer(p.config, inference::ModelKind::kAggVae, log);
  }
  RenderOptions opts;
  REQUIRE(cmd_render(p.config, opts, log) == kExitOk);
  const std::string old_svg = read_text_file(p.config.out_dir / "map_old_aggvae.svg");
  const std::string new_svg = read_text_file(p.config.out_dir / "map_new_aggvae.svg");
  CHECK(well_formed_xml(old_svg));
  CHECK(well_formed_xml(new_svg));
  CHECK(fills(old_svg, 4).size() == 4);
  CHECK(fills(new_svg, 9).size() == 9);
  const auto scatter = data_lines(read_text_file(p.config.out_dir / "scatter_aggvae.csv"));
  CHECK(scatter.size() == 1 + 13);
  CHECK(scatter.front() == "era,unit,estimate,crude,truth");

  // Constant prevalence everywhere paints every polygon the same colour.
  std::vector<std::string> cols;
  for (int i = 0; i < 4; ++i) cols.push_back("theta_old[" + std::to_string(i) + "]");
  for (int i = 0; i < 9; ++i) cols.push_back("theta_new[" + std::to_string(i) + "]");
  inference::ChainSet flat(cols, 2, 0, 5);
  flat.model = "aggvae";
  std::fill(flat.data().begin(), flat.data().end(), 0.3);
  const fs::path flat_path = p.dir / "flat.bin";
  inference::save_draws(flat_path, flat);
  opts.draws = flat_path;
  REQUIRE(cmd_render(p.config, opts, log) == kExitOk);
  for (const char* era : {"old", "new"}) {
    const std::string e(era);
    const auto f = fills(read_text_file(p.config.out_dir / ("map_" + e + "_aggvae.svg")),
                         e == "old" ? 4 : 9);
    REQUIRE(!f.empty());
    CHECK(std::set<std::string>(f.begin(), f.end()).size() == 1);
  }

  // Unit count mismatch.
  inference::ChainSet short_set({"theta_old[0]", "theta_new[0]"}, 1, 0, 3);
  inference::save_draws(p.dir / "short.bin", short_set);
  opts.draws = p.dir / "short.bin";
  CHECK_THROWS_AS(cmd_render(p.config, opts, log), Error);
}

TEST_CASE("compare: seven metric rows and swapped inputs swap the columns") {
  const auto& p = encoded();
  std::ostringstream log;
  for (const char* m : {"aggvae", "agggp"}) {
    if (!fs::exists(p.config.draws_path(m))) {
      cmd_infer(p.config, inference::model_kind_from_string(m), log);
    }
  }
  REQUIRE(cmd_compare(p.config, {}, log) == kExitOk);
  const auto csv = data_lines(read_text_file(p.config.out_dir / "comparison.csv"));
  REQUIRE(csv.size() == 8);
  CHECK(csv.front() == "metric,aggGP,aggVAE");
  CHECK(fs::is_regular_file(p.config.out_dir / "comparison.txt"));

  CompareOptions swapped{p.config.draws_path("aggvae"), p.config.draws_path("agggp")};
  REQUIRE(cmd_compare(p.config, swapped, log) == kExitOk);
  const auto back = data_lines(read_text_file(p.config.out_dir / "comparison.csv"));
  REQUIRE(back.size() == 8);
  CHECK(back.front() == "metric,aggVAE,aggGP");
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  for (std::size_t i = 1; i < csv.size(); ++i) {
    const auto a = split(csv[i]);
    const auto b = split(back[i]);
    REQUIRE(a.size() == 3);
    REQUIRE(b.size() == 3);
    CHECK(a[0] == b[0]);
    CHECK(a[1] == b[2]);
    CHECK(a[2] == b[1]);
  }
}

TEST_CASE("run: exit codes and argument handling") {
  const auto dir = testing::scratch_dir("cli_run");
  const fs::path cfg = dir / "c.cfg";
  write_text_file(cfg, small_config(dir / "out"));
  std::ostringstream out, err;
  CHECK(run({"--config", cfg.string(), "synth"}, out, err) == kExitOk);
  CHECK(fs::is_regular_file(dir / "out" / "truth.csv"));

  // --seed and --out override the file.
  CHECK(run({"--config", cfg.string(), "--seed", "99", "--out",
             (dir / "o2").string(), "synth"},
            out, err) == kExitOk);
  CHECK(read_text_file(dir / "o2" / "provenance.json").find("\"seed\": \"99\"") !=
        std::string::npos);

  const fs::path noseed = dir / "noseed.cfg";
  write_text_file(noseed, "out_dir = " + (dir / "o3").string() + "\n");
  err.str("");
  CHECK(run({"--config", noseed.string(), "synth"}, out, err) == kExitError);
  CHECK(err.str().find("root seed is required") != std::string::npos);

  const fs::path bad = dir / "bad.cfg";
  write_text_file(bad, "seed = 1\nunknown.key = 3\n");
  err.str("");
  CHECK(run({"--config", bad.string(), "synth"}, out, err) == kExitError);
  CHECK(err.str().find("unknown key 'unknown.key'") != std::string::npos);

  CHECK(run({"--config", cfg.string(), "infer", "--model", "other"}, out, err) ==
        kExitError);
  CHECK(run({"--config", (dir / "missing.cfg").string(), "synth"}, out, err) ==
        kExitError);
  CHECK(run({"--config", cfg.string(), "render"}, out, err) == kExitError);
}

TEST_CASE("the installed binary runs end to end") {
  const auto dir = testing::scratch_dir("cli_binary");
  const fs::path cfg = dir / "c.cfg";
  write_text_file(cfg, small_config(dir / "out"));
  const std::string base = std::string("\"") + AGGVAE_CLI_PATH + "\" --config \"" +
                           cfg.string() + "\" ";
  CHECK(std::system((base + "synth > /dev/null").c_str()) == 0);
  CHECK(fs::is_regular_file(dir / "out" / "boundaries_new.geojson"));
  CHECK(std::system((base + "bogus > /dev/null 2>&1").c_str()) != 0);
}
