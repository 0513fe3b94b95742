#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cli/config.hpp"
#include "aggvae/models.hpp"

namespace aggvae::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitWarnings = 2;

/// Largest R-hat over spatial random effects above which `infer` reports
/// diagnostic warnings.
inline constexpr double kRhatWarning = 1.05;

/// Writes the synthetic scenario files and provenance.json into out_dir.
int cmd_synth(const PipelineConfig& config, std::ostream& log);

/// Trains the VAE prior on aggregated GP draws for the configured boundaries.
/// Writes the decoder file and loss_trace.csv.
int cmd_encode(const PipelineConfig& config, std::ostream& log);

/// Runs NUTS for one model; writes draws, the timing sidecar and
/// diagnostics_<model>.csv.
int cmd_infer(const PipelineConfig& config, inference::ModelKind model, std::ostream& log);

struct RenderOptions {
  inference::ModelKind model = inference::ModelKind::kAggVae;
  std::optional<std::filesystem::path> draws;  // default: config draws path
};

/// map_old_<model>.svg, map_new_<model>.svg and scatter_<model>.csv.
int cmd_render(const PipelineConfig& config, const RenderOptions& options, std::ostream& log);

struct CompareOptions {
  std::optional<std::filesystem::path> first;   // default: aggGP draws
  std::optional<std::filesystem::path> second;  // default: aggVAE draws
};

/// Prints the comparison table and writes comparison.txt and comparison.csv.
int cmd_compare(const PipelineConfig& config, const CompareOptions& options, std::ostream& log);

/// Full command-line entry point. Hard errors are reported on `err` and
/// mapped to kExitError.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aggvae::cli
