#include "aggvae/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "aggvae/error.hpp"

namespace aggvae::render {

namespace {

struct Rgb {
  double r, g, b;
};

// Samples of a perceptually ordered dark-blue to yellow ramp.
constexpr std::array<Rgb, 6> kStops{{{68, 1, 84},
                                     {65, 68, 135},
                                     {42, 120, 142},
                                     {34, 168, 132},
                                     {122, 209, 81},
                                     {253, 231, 37}}};

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string num(double x, int decimals = 3) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
  return buf;
}

struct Frame {
  geometry::BoundingBox box;
  double ox, oy, size;
  double sx(double x) const { return ox + (x - box.xmin) / span() * size; }
  double sy(double y) const { return oy + size - (y - box.ymin) / span() * size; }
  double span() const { return std::max(box.width(), box.height()); }
};

void draw_map(std::ostringstream& out, const geometry::PolygonSet& set,
              const std::vector<double>& values, const Frame& f, const std::string& id) {
  out << "  <g id=\"" << id << "\">\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    out << "    <path d=\"";
    const auto& ring = set.polygons[i];
    for (std::size_t k = 0; k + 1 < ring.size(); ++k) {
      out << (k == 0 ? "M" : " L") << num(f.sx(ring[k].x), 2) << ' ' << num(f.sy(ring[k].y), 2);
    }
    const double v = values[i];
    out << " Z\" fill=\"" << (std::isfinite(v) ? prevalence_colour(v) : std::string("#cccccc"))
        << "\" stroke=\"#222222\" stroke-width=\"1\"><title>" << escape(set.labels[i]) << ": "
        << (std::isfinite(v) ? num(v) : std::string("n/a")) << "</title></path>\n";
  }
  out << "  </g>\n";
}

}  // namespace

std::string prevalence_colour(double value) {
  const double v = std::isfinite(value) ? std::clamp(value, 0.0, 1.0) : 0.0;
  const double pos = v * static_cast<double>(kStops.size() - 1);
  const auto lo = std::min(static_cast<std::size_t>(pos), kStops.size() - 2);
  const double t = pos - static_cast<double>(lo);
  const Rgb& a = kStops[lo];
  const Rgb& b = kStops[lo + 1];
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                static_cast<int>(std::lround(a.r + t * (b.r - a.r))),
                static_cast<int>(std::lround(a.g + t * (b.g - a.g))),
                static_cast<int>(std::lround(a.b + t * (b.b - a.b))));
  return buf;
}

std::string choropleth_svg(const ChoroplethInput& in) {
  if (in.polygons == nullptr) throw Error("choropleth needs polygons");
  const auto& set = *in.polygons;
  const std::size_t k = set.size();
  if (in.estimate.size() != k || in.crude.size() != k || (in.truth && in.truth->size() != k)) {
    throw Error("choropleth '" + in.title + "': " + std::to_string(k) +
                " polygons but value vectors of different length");
  }
  const auto box = geometry::bounding_box(set);
  const double main_size = 400.0;
  const double side_size = 180.0;
  const std::size_t listing = in.truth ? k : 0;
  const double height = 520.0 + 16.0 * static_cast<double>(listing);
  const double width = 40.0 + main_size + 40.0 + side_size + 40.0;

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width, 0) << "\" height=\""
      << num(height, 0) << "\" viewBox=\"0 0 " << num(width, 0) << ' ' << num(height, 0)
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "  <rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  out << "  <text x=\"40\" y=\"28\" font-size=\"16\">" << escape(in.title) << "</text>\n";

  const Frame main{box, 40.0, 50.0, main_size};
  draw_map(out, set, in.estimate, main, "estimate");
  const Frame side{box, 40.0 + main_size + 40.0, 70.0, side_size};
  out << "  <text x=\"" << num(side.ox, 0) << "\" y=\"62\">Crude n_pos/n_tests</text>\n";
  draw_map(out, set, in.crude, side, "crude");

  // Colour bar over [0, 1].
  const double bar_x = side.ox;
  const double bar_y = 300.0;
  out << "  <g id=\"scale\">\n";
  for (int i = 0; i < 50; ++i) {
    const double v = (i + 0.5) / 50.0;
    out << "    <rect x=\"" << num(bar_x + i * side_size / 50.0, 2) << "\" y=\"" << num(bar_y, 0)
        << "\" width=\"" << num(side_size / 50.0 + 0.2, 2) << "\" height=\"14\" fill=\""
        << prevalence_colour(v) << "\"/>\n";
  }
  out << "    <text x=\"" << num(bar_x, 0) << "\" y=\"" << num(bar_y + 28, 0) << "\">0</text>\n";
  out << "    <text x=\"" << num(bar_x + side_size - 8, 0) << "\" y=\"" << num(bar_y + 28, 0)
      << "\">1</text>\n";
  out << "  </g>\n";

  if (in.truth) {
    out << "  <g id=\"residuals\">\n";
    out << "    <text x=\"40\" y=\"490\">unit: estimate - truth</text>\n";
    for (std::size_t i = 0; i < k; ++i) {
      out << "    <text x=\"40\" y=\"" << num(506.0 + 16.0 * static_cast<double>(i), 0) << "\">"
          << escape(set.labels[i]) << ": " << num(in.estimate[i] - (*in.truth)[i], 4)
          << "</text>\n";
    }
    out << "  </g>\n";
  }
  if (!in.footer.empty()) {
    out << "  <text x=\"40\" y=\"" << num(height - 8, 0) << "\" font-size=\"9\" fill=\"#555555\">"
        << escape(in.footer) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string scatter_csv(const std::vector<ScatterRow>& rows, const std::string& comment) {
  std::ostringstream out;
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "era,unit,estimate,crude,truth\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g,", r.estimate, r.crude);
    out << r.era << ',' << r.unit << ',' << buf;
    if (r.truth) {
      std::snprintf(buf, sizeof buf, "%.10g", *r.truth);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace aggvae::render
