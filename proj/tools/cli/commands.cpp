#include "cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "aggvae/aggregation.hpp"
#include "aggvae/chains.hpp"
#include "aggvae/container.hpp"
#include "aggvae/diagnostics.hpp"
#include "aggvae/error.hpp"
#include "aggvae/geometry.hpp"
#include "aggvae/nuts.hpp"
#include "aggvae/prevalence.hpp"
#include "aggvae/render.hpp"
#include "aggvae/synth.hpp"
#include "aggvae/vae.hpp"

namespace aggvae::cli {
namespace fs = std::filesystem;

namespace {

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) {
    throw Error(what + " not found: " + path.string());
  }
}

std::string provenance_comment(const std::map<std::string, std::string>& p) {
  std::string line;
  for (const auto& [k, v] : p) {
    if (!line.empty()) line += ' ';
    line += k + "=" + v;
  }
  return line;
}

std::string comment_block(const std::map<std::string, std::string>& p) {
  return "# " + provenance_comment(p) + "\n";
}

struct Boundaries {
  geometry::PolygonSet old_set;
  geometry::PolygonSet new_set;
};

Boundaries load_boundaries(const PipelineConfig& config) {
  require_file(config.boundaries_old_path(), "old boundary file");
  require_file(config.boundaries_new_path(), "new boundary file");
  return {geometry::load_polygons(config.boundaries_old_path(), "old"),
          geometry::load_polygons(config.boundaries_new_path(), "new")};
}

std::shared_ptr<inference::GeometryHandles> build_geometry(const PipelineConfig& config,
                                                           const Boundaries& b) {
  auto g = std::make_shared<inference::GeometryHandles>();
  g->grid = geometry::build_grid(geometry::bounding_box(b.old_set, b.new_set),
                                 config.grid_resolution);
  g->m_old = geometry::membership_matrix(g->grid, b.old_set);
  g->m_new = geometry::membership_matrix(g->grid, b.new_set);
  return g;
}

void check_labels(const inference::PrevalenceData& data, const geometry::PolygonSet& set,
                  const std::string& era) {
  if (data.size() != set.size()) {
    throw Error(era + " data has " + std::to_string(data.size()) + " units but the " + era +
                " boundary file has " + std::to_string(set.size()) + " polygons");
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] != set.labels[i]) {
      throw Error(era + " data unit " + std::to_string(i) + " is '" + data.labels[i] +
                  "' but the boundary file has '" + set.labels[i] + "'");
    }
  }
}

vae::VaeArchitecture architecture(const VaeSettings& s, std::size_t dim) {
  vae::VaeArchitecture arch = vae::VaeArchitecture::defaults(dim);
  if (!s.hidden.empty()) arch.hidden = s.hidden;
  if (s.latent_dim > 0) arch.latent_dim = s.latent_dim;
  arch.activation = vae::activation_from_string(s.activation);
  return arch;
}

unsigned chain_threads(const PipelineConfig& config) {
  return config.mcmc.threads != 0 ? config.mcmc.threads : config.threads;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

int cmd_synth(const PipelineConfig& config, std::ostream& log) {
  const std::uint64_t seed = config.require_seed();
  synth::ScenarioParams p;
  p.rows_old = config.synth.rows_old;
  p.cols_old = config.synth.cols_old;
  p.rows_new = config.synth.rows_new;
  p.cols_new = config.synth.cols_new;
  p.extent = config.synth.extent;
  p.grid_resolution = config.grid_resolution;
  p.truth.b0 = config.synth.b0;
  p.truth.kernel = {config.synth.variance, config.synth.lengthscale};
  p.truth.zero_field = config.synth.zero_field;
  p.tests_per_unit = config.synth.tests_per_unit;
  p.test_skew = config.synth.test_skew;

  const synth::Scenario s = synth::simulate_counts(p, seed);
  for (const auto& w : s.warnings) log << "warning: " << w << "\n";

  const auto prov = config.provenance(s.provenance);
  fs::create_directories(config.out_dir);
  write_text_file(config.boundaries_old_path(), geometry::to_geojson(s.polygons_old, prov));
  write_text_file(config.boundaries_new_path(), geometry::to_geojson(s.polygons_new, prov));
  const std::string comment = provenance_comment(prov);
  write_text_file(config.data_old_path(), inference::prevalence_to_csv(s.data_old, comment));
  write_text_file(config.data_new_path(), inference::prevalence_to_csv(s.data_new, comment));
  write_text_file(config.truth_path(), synth::truth_to_csv(s, comment));

  nlohmann::ordered_json j;
  j["provenance"] = prov;
  j["config"] = config.canonical();
  j["files"] = {config.boundaries_old_path().filename().string(),
                config.boundaries_new_path().filename().string(),
                config.data_old_path().filename().string(),
                config.data_new_path().filename().string(),
                config.truth_path().filename().string()};
  write_text_file(config.out_dir / "provenance.json", j.dump(2) + "\n");

  log << "synth: K1=" << s.polygons_old.size() << " K2=" << s.polygons_new.size()
      << " grid=" << s.grid.size() << " points, files in " << config.out_dir.string() << "\n";
  return kExitOk;
}

int cmd_encode(const PipelineConfig& config, std::ostream& log) {
  const std::uint64_t seed = config.require_seed();
  const Boundaries b = load_boundaries(config);
  const auto g = build_geometry(config, b);

  aggregation::TrainingSetOptions topt;
  topt.count = config.vae.training_size;
  topt.seed = seed;
  topt.threads = config.threads;
  log << "encode: drawing " << topt.count << " aggregated GP samples on a "
      << g->grid.nx << "x" << g->grid.ny << " grid\n";
  const auto data =
      aggregation::generate_training_set(g->grid, g->m_old, g->m_new, config.hyperpriors, topt);

  vae::TrainOptions opt;
  opt.epochs = config.vae.epochs;
  opt.batch_size = config.vae.batch_size;
  opt.learning_rate = config.vae.learning_rate;
  opt.final_lr_ratio = config.vae.final_lr_ratio;
  opt.noise_sigma = config.vae.noise_sigma;
  opt.seed = seed;
  opt.grid_resolution = config.grid_resolution;
  opt.hyperpriors = config.hyperpriors;
  const int report_every = std::max(1, config.vae.epochs / 10);
  opt.on_epoch = [&](int epoch, double loss) {
    if ((epoch + 1) % report_every == 0) {
      log << "  epoch " << epoch + 1 << "/" << config.vae.epochs << " loss " << fmt(loss) << "\n";
    }
  };

  vae::TrainResult result = vae::train(data, architecture(config.vae, data.dim()), opt);
  const auto prov = config.provenance();
  for (const auto& [k, v] : prov) result.decoder.provenance.extra[k] = v;
  vae::save_decoder(config.decoder_path(), result.decoder);

  std::string trace = comment_block(prov);
  trace += "loss\n";
  for (double v : result.loss_trace) trace += fmt(v) + "\n";
  write_text_file(config.out_dir / "loss_trace.csv", trace);

  log << "encode: decoder K1=" << result.decoder.k1 << " K2=" << result.decoder.k2
      << " latent=" << result.decoder.latent_dim() << " written to "
      << config.decoder_path().string() << "\n";
  return kExitOk;
}

int cmd_infer(const PipelineConfig& config, inference::ModelKind model, std::ostream& log) {
  const std::uint64_t seed = config.require_seed();
  const Boundaries b = load_boundaries(config);
  require_file(config.data_old_path(), "old data file");
  require_file(config.data_new_path(), "new data file");

  inference::ModelSpec spec;
  spec.kind = model;
  spec.priors.intercept = config.intercept_sd;
  spec.priors.s = config.s_scale;
  spec.hyperpriors = config.hyperpriors;
  spec.data_old = inference::load_prevalence(config.data_old_path());
  spec.data_new = inference::load_prevalence(config.data_new_path());
  check_labels(spec.data_old, b.old_set, "old");
  check_labels(spec.data_new, b.new_set, "new");

  if (model == inference::ModelKind::kAggGp) {
    spec.geometry = build_geometry(config, b);
  } else {
    require_file(config.decoder_path(), "decoder file");
    auto dec = std::make_shared<vae::DecoderWeights>(vae::load_decoder(config.decoder_path()));
    if (dec->k1 != b.old_set.size() || dec->k2 != b.new_set.size()) {
      throw Error("decoder was trained for K1=" + std::to_string(dec->k1) + ", K2=" +
                  std::to_string(dec->k2) + " but the boundary files have " +
                  std::to_string(b.old_set.size()) + " and " + std::to_string(b.new_set.size()));
    }
    spec.decoder = std::move(dec);
  }

  inference::NutsSettings ns;
  ns.chains = config.mcmc.chains;
  ns.warmup = config.mcmc.warmup;
  ns.samples = config.mcmc.samples;
  ns.target_accept = config.mcmc.target_accept;
  ns.max_depth = config.mcmc.max_depth;
  ns.seed = seed;
  ns.threads = chain_threads(config);

  const std::string name = inference::to_string(model);
  log << "infer: " << name << ", " << ns.chains << " chains x (" << ns.warmup << " warmup + "
      << ns.samples << " samples)\n";
  inference::ChainSet set = inference::run_nuts(spec, ns);
  for (const auto& [k, v] : config.provenance()) set.provenance[k] = v;
  const fs::path draws = config.draws_path(name);
  inference::save_draws(draws, set);

  const auto rows = diagnostics::summarize(set);
  const auto summary = diagnostics::summarize_model(set, name);
  auto prov = config.provenance();
  prov["model"] = name;
  prov["unreliable"] = set.unreliable ? "true" : "false";
  prov["divergence_rate"] = fmt(set.divergence_rate());
  const fs::path diag = config.out_dir / ("diagnostics_" + name + ".csv");
  write_text_file(diag, comment_block(prov) + diagnostics::summaries_to_csv(rows));

  const double max_rhat = std::max(summary.max_rhat_old, summary.max_rhat_new);
  log << "infer: draws " << draws.string() << ", max R-hat (REs) " << fmt(max_rhat)
      << ", avg ESS (REs) " << fmt(summary.avg_ess_re) << ", divergence rate "
      << fmt(set.divergence_rate()) << "\n";

  int code = kExitOk;
  if (set.unreliable) {
    log << "warning: divergence rate above threshold; chains flagged unreliable\n";
    code = kExitWarnings;
  }
  if (!(max_rhat <= kRhatWarning)) {
    log << "warning: max R-hat over random effects " << fmt(max_rhat) << " exceeds "
        << fmt(kRhatWarning) << "\n";
    code = kExitWarnings;
  }
  return code;
}

int cmd_render(const PipelineConfig& config, const RenderOptions& options, std::ostream& log) {
  const Boundaries b = load_boundaries(config);
  const std::string name = inference::to_string(options.model);
  const fs::path draws_path = options.draws.value_or(config.draws_path(name));
  require_file(draws_path, "draw file");
  require_file(config.data_old_path(), "old data file");
  require_file(config.data_new_path(), "new data file");

  const inference::ChainSet set = inference::load_draws(draws_path);
  const auto post = inference::posterior_prevalence(set);
  if (post.old_units.size() != b.old_set.size() || post.new_units.size() != b.new_set.size()) {
    throw Error("draw file has " + std::to_string(post.old_units.size()) + " + " +
                std::to_string(post.new_units.size()) + " units but the boundary files have " +
                std::to_string(b.old_set.size()) + " + " + std::to_string(b.new_set.size()));
  }
  const auto data_old = inference::load_prevalence(config.data_old_path());
  const auto data_new = inference::load_prevalence(config.data_new_path());
  check_labels(data_old, b.old_set, "old");
  check_labels(data_new, b.new_set, "new");

  // Truth is optional; an explicitly configured path must exist.
  std::map<std::string, double> truth;
  const fs::path tpath = config.truth_path();
  if (!config.truth.empty()) require_file(tpath, "truth file");
  if (fs::is_regular_file(tpath)) {
    std::istringstream in(read_text_file(tpath));
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (header) {
        header = false;
        continue;
      }
      const auto c1 = line.find(',');
      const auto c2 = line.find(',', c1 + 1);
      if (c1 == std::string::npos || c2 == std::string::npos) {
        throw Error("malformed truth line: " + line);
      }
      truth[line.substr(0, c2)] = std::stod(line.substr(c2 + 1));
    }
  }

  auto prov = config.provenance(set.provenance);
  prov["model"] = name;
  const std::string footer = provenance_comment(prov);
  std::vector<render::ScatterRow> scatter;

  auto era = [&](const std::string& tag, const geometry::PolygonSet& polys,
                 const std::vector<inference::UnitSummary>& units,
                 const inference::PrevalenceData& data) {
    render::ChoroplethInput in;
    in.title = name + " posterior mean prevalence, " + tag + " boundaries";
    in.polygons = &polys;
    in.footer = footer;
    const Eigen::VectorXd crude = data.crude();
    std::vector<double> t;
    for (std::size_t i = 0; i < units.size(); ++i) {
      in.estimate.push_back(units[i].mean);
      in.crude.push_back(crude(static_cast<Eigen::Index>(i)));
      render::ScatterRow row{tag, polys.labels[i], units[i].mean, in.crude.back(), std::nullopt};
      const auto it = truth.find(tag + "," + polys.labels[i]);
      if (it != truth.end()) {
        row.truth = it->second;
        t.push_back(it->second);
      }
      scatter.push_back(row);
    }
    if (!t.empty() && t.size() == units.size()) in.truth = t;
    const fs::path svg = config.out_dir / ("map_" + tag + "_" + name + ".svg");
    write_text_file(svg, render::choropleth_svg(in));
    log << "render: " << svg.string() << "\n";
  };
  era("old", b.old_set, post.old_units, data_old);
  era("new", b.new_set, post.new_units, data_new);

  const fs::path sc = config.out_dir / ("scatter_" + name + ".csv");
  write_text_file(sc, render::scatter_csv(scatter, footer));
  log << "render: " << sc.string() << "\n";

  log << "unit, posterior mean, crude, truth\n";
  for (const auto& r : scatter) {
    log << "  " << r.era << "/" << r.unit << "  " << fmt(r.estimate) << "  crude "
        << fmt(r.crude);
    if (r.truth) log << "  truth " << fmt(*r.truth);
    log << "\n";
  }
  return kExitOk;
}

int cmd_compare(const PipelineConfig& config, const CompareOptions& options, std::ostream& log) {
  const fs::path first = options.first.value_or(config.draws_path("agggp"));
  const fs::path second = options.second.value_or(config.draws_path("aggvae"));
  require_file(first, "draw file");
  require_file(second, "draw file");
  const auto a = inference::load_draws(first);
  const auto b = inference::load_draws(second);
  const auto report = diagnostics::comparison_report(a, b);

  auto prov = config.provenance();
  prov["first"] = first.filename().string();
  prov["second"] = second.filename().string();
  const std::string header = comment_block(prov);
  const std::string table = diagnostics::format_table(report);
  write_text_file(config.out_dir / "comparison.txt", header + table);
  write_text_file(config.out_dir / "comparison.csv", header + diagnostics::format_csv(report));
  log << table;
  return kExitOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Aggregated GP priors encoded with a VAE for change-of-support prevalence mapping",
               "aggvae"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  app.add_option("--config", config_path, "Key-value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Root seed (overrides the config file)");
  app.add_option("--out", out_dir, "Output directory (overrides the config file)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-boundary scenario");
  auto* encode = app.add_subcommand("encode", "Train the VAE prior for the configured boundaries");
  auto* infer = app.add_subcommand("infer", "Run NUTS for one model");
  std::string model_name;
  infer->add_option("--model", model_name, "agggp or aggvae")
      ->required()
      ->check(CLI::IsMember({"agggp", "aggvae"}));
  auto* render_cmd = app.add_subcommand("render", "Choropleth maps and scatter file");
  std::string render_model = "aggvae";
  std::string render_draws;
  render_cmd->add_option("--model", render_model, "agggp or aggvae")
      ->check(CLI::IsMember({"agggp", "aggvae"}));
  render_cmd->add_option("--draws", render_draws, "Draw file (default: from config)");
  auto* compare = app.add_subcommand("compare", "Efficiency comparison of two draw files");
  std::string cmp_first;
  std::string cmp_second;
  compare->add_option("first", cmp_first, "First draw file (default: aggGP draws)");
  compare->add_option("second", cmp_second, "Second draw file (default: aggVAE draws)");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }

  try {
    PipelineConfig config = config_path.empty() ? PipelineConfig{} : load_config(config_path);
    if (seed) config.seed = *seed;
    if (!out_dir.empty()) config.out_dir = out_dir;

    if (synth->parsed()) return cmd_synth(config, out);
    if (encode->parsed()) return cmd_encode(config, out);
    if (infer->parsed()) {
      return cmd_infer(config, inference::model_kind_from_string(model_name), out);
    }
    if (render_cmd->parsed()) {
      RenderOptions ro;
      ro.model = inference::model_kind_from_string(render_model);
      if (!render_draws.empty()) ro.draws = render_draws;
      return cmd_render(config, ro, out);
    }
    CompareOptions co;
    if (!cmp_first.empty()) co.first = cmp_first;
    if (!cmp_second.empty()) co.second = cmp_second;
    return cmd_compare(config, co, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace aggvae::cli
