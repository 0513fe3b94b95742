#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aggvae/geometry.hpp"

namespace aggvae::render {

/// Hex colour for a prevalence value on the fixed [0, 1] scale; values
/// outside are clamped.
std::string prevalence_colour(double value);

struct ChoroplethInput {
  std::string title;
  const geometry::PolygonSet* polygons = nullptr;
  std::vector<double> estimate;  // posterior mean per unit
  std::vector<double> crude;     // n_pos / n_tests per unit
  std::optional<std::vector<double>> truth;
  std::string footer;  // provenance line
};

/// Main map coloured by the estimate, a side panel coloured by the crude
/// estimate, and a residual listing when a truth vector is given.
std::string choropleth_svg(const ChoroplethInput& input);

struct ScatterRow {
  std::string era;
  std::string unit;
  double estimate = 0.0;
  double crude = 0.0;
  std::optional<double> truth;
};

std::string scatter_csv(const std::vector<ScatterRow>& rows, const std::string& comment = {});

}  // namespace aggvae::render
