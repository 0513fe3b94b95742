#include "aggvae/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "aggvae/container.hpp"
#include "aggvae/error.hpp"

namespace aggvae::geometry {

using nlohmann::json;

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Ring parse_ring(const json& coords, const std::string& feature) {
  if (!coords.is_array()) throw Error("feature " + feature + ": ring is not an array");
  Ring ring;
  ring.reserve(coords.size());
  for (const auto& c : coords) {
    if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number()) {
      throw Error("feature " + feature + ": malformed coordinate");
    }
    ring.push_back({c[0].get<double>(), c[1].get<double>()});
  }
  return ring;
}

double cross(Point o, Point a, Point b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

}  // namespace

void validate(const PolygonSet& set) {
  if (set.polygons.empty()) throw Error("polygon set '" + set.name + "': no polygons");
  if (set.labels.size() != set.polygons.size()) {
    throw Error("polygon set '" + set.name + "': label count mismatch");
  }
  for (std::size_t i = 0; i < set.polygons.size(); ++i) {
    const Ring& r = set.polygons[i];
    if (r.size() < 4) {
      throw Error("polygon '" + set.labels[i] + "': ring needs at least 4 vertices");
    }
    if (!(r.front() == r.back())) {
      throw Error("polygon '" + set.labels[i] + "': ring is not closed");
    }
    for (const Point& p : r) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        throw Error("polygon '" + set.labels[i] + "': non-finite coordinate");
      }
    }
  }
}

PolygonSet parse_polygons(std::string_view geojson, std::string name) {
  json doc;
  try {
    doc = json::parse(geojson);
  } catch (const json::parse_error& e) {
    throw Error("GeoJSON parse failure: " + std::string(e.what()));
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array()) {
    throw Error("GeoJSON input is not a FeatureCollection");
  }
  PolygonSet set;
  set.name = std::move(name);
  std::size_t index = 0;
  for (const auto& feature : doc["features"]) {
    std::string label = std::to_string(index);
    if (feature.contains("id") && !feature["id"].is_null()) {
      label = feature["id"].is_string() ? feature["id"].get<std::string>()
                                        : feature["id"].dump();
    } else if (feature.contains("properties") && feature["properties"].is_object() &&
               feature["properties"].contains("id")) {
      const auto& id = feature["properties"]["id"];
      label = id.is_string() ? id.get<std::string>() : id.dump();
    }
    const std::string where = "'" + label + "' (#" + std::to_string(index) + ")";
    if (!feature.contains("geometry") || !feature["geometry"].is_object()) {
      throw Error("feature " + where + ": missing geometry");
    }
    const auto& geometry = feature["geometry"];
    const std::string type = geometry.value("type", "");
    if (type != "Polygon") {
      throw Error("feature " + where + ": geometry type '" + type +
                  "' is not Polygon");
    }
    const auto& coords = geometry["coordinates"];
    if (!coords.is_array() || coords.empty()) {
      throw Error("feature " + where + ": empty coordinates");
    }
    if (coords.size() > 1) {
      throw Error("feature " + where + ": interior rings (holes) are not supported");
    }
    Ring ring = parse_ring(coords[0], where);
    if (ring.size() < 4) throw Error("feature " + where + ": ring needs at least 4 vertices");
    if (!(ring.front() == ring.back())) throw Error("feature " + where + ": unclosed ring");
    set.polygons.push_back(std::move(ring));
    set.labels.push_back(label);
    ++index;
  }
  if (set.polygons.empty()) throw Error("no polygons in FeatureCollection");
  validate(set);
  return set;
}

PolygonSet load_polygons(const std::filesystem::path& path, std::string name) {
  return parse_polygons(read_text_file(path), std::move(name));
}

std::string to_geojson(const PolygonSet& set,
                       const std::map<std::string, std::string>& provenance) {
  json doc;
  doc["type"] = "FeatureCollection";
  doc["name"] = set.name;
  if (!provenance.empty()) doc["provenance"] = provenance;
  json features = json::array();
  for (std::size_t i = 0; i < set.polygons.size(); ++i) {
    json ring = json::array();
    for (const Point& p : set.polygons[i]) ring.push_back({p.x, p.y});
    features.push_back({{"type", "Feature"},
                        {"id", set.labels[i]},
                        {"properties", {{"id", set.labels[i]}}},
                        {"geometry", {{"type", "Polygon"},
                                      {"coordinates", json::array({ring})}}}});
  }
  doc["features"] = std::move(features);
  return doc.dump(1) + "\n";
}

BoundingBox bounding_box(const PolygonSet& set) {
  validate(set);
  BoundingBox b{set.polygons[0][0].x, set.polygons[0][0].y,
                set.polygons[0][0].x, set.polygons[0][0].y};
  for (const Ring& r : set.polygons) {
    for (const Point& p : r) {
      b.xmin = std::min(b.xmin, p.x);
      b.ymin = std::min(b.ymin, p.y);
      b.xmax = std::max(b.xmax, p.x);
      b.ymax = std::max(b.ymax, p.y);
    }
  }
  return b;
}

BoundingBox bounding_box(const PolygonSet& a, const PolygonSet& b) {
  BoundingBox ba = bounding_box(a);
  const BoundingBox bb = bounding_box(b);
  ba.xmin = std::min(ba.xmin, bb.xmin);
  ba.ymin = std::min(ba.ymin, bb.ymin);
  ba.xmax = std::max(ba.xmax, bb.xmax);
  ba.ymax = std::max(ba.ymax, bb.ymax);
  return ba;
}

double ring_area(const Ring& ring) {
  double twice = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    twice += ring[i].x * ring[i + 1].y - ring[i + 1].x * ring[i].y;
  }
  return std::abs(twice) / 2.0;
}

std::string Grid::id() const {
  return std::to_string(nx) + "x" + std::to_string(ny) + "@" +
         format_double(box.xmin) + "," + format_double(box.ymin) + "," +
         format_double(box.xmax) + "," + format_double(box.ymax);
}

Grid build_grid(const BoundingBox& box, int resolution) {
  if (resolution < 2) throw Error("grid resolution must be >= 2");
  if (!(box.width() > 0.0) || !(box.height() > 0.0)) {
    throw Error("degenerate bounding box (zero width or height)");
  }
  Grid g;
  g.box = box;
  g.nx = resolution;
  g.ny = resolution;
  g.dx = box.width() / resolution;
  g.dy = box.height() / resolution;
  g.points.reserve(static_cast<std::size_t>(resolution) * resolution);
  for (int iy = 0; iy < g.ny; ++iy) {
    const double y = box.ymin + (iy + 0.5) * g.dy;
    for (int ix = 0; ix < g.nx; ++ix) {
      g.points.push_back({box.xmin + (ix + 0.5) * g.dx, y});
    }
  }
  return g;
}

Grid build_grid(const PolygonSet& set, int resolution) {
  return build_grid(bounding_box(set), resolution);
}

Location locate(Point p, const Ring& ring) {
  bool inside = false;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const Point a = ring[i];
    const Point b = ring[i + 1];
    if (cross(a, b, p) == 0.0 && p.x >= std::min(a.x, b.x) &&
        p.x <= std::max(a.x, b.x) && p.y >= std::min(a.y, b.y) &&
        p.y <= std::max(a.y, b.y)) {
      return Location::kBoundary;
    }
    // Half-open rule on y so a vertex shared by two edges is counted once.
    if ((a.y > p.y) != (b.y > p.y)) {
      const double side = cross(a, b, p);
      if ((b.y > a.y) ? side > 0.0 : side < 0.0) inside = !inside;
    }
  }
  return inside ? Location::kInside : Location::kOutside;
}

bool point_in_polygon(Point p, const Ring& ring) {
  return locate(p, ring) != Location::kOutside;
}

MembershipMatrix::MembershipMatrix(std::string polygon_set_name,
                                   std::string grid_id, std::size_t rows,
                                   std::vector<int> owner)
    : polygon_set_name_(std::move(polygon_set_name)),
      grid_id_(std::move(grid_id)),
      owner_(std::move(owner)),
      members_(rows) {
  for (std::size_t j = 0; j < owner_.size(); ++j) {
    const int o = owner_[j];
    if (o < -1 || o >= static_cast<int>(rows)) {
      throw Error("membership owner index out of range");
    }
    if (o >= 0) members_[static_cast<std::size_t>(o)].push_back(j);
  }
}

Eigen::MatrixXd MembershipMatrix::dense() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows()),
                                            static_cast<Eigen::Index>(cols()));
  for (std::size_t j = 0; j < cols(); ++j) {
    if (owner_[j] >= 0) m(owner_[j], static_cast<Eigen::Index>(j)) = 1.0;
  }
  return m;
}

std::vector<std::size_t> MembershipMatrix::row_sums() const {
  std::vector<std::size_t> sums;
  sums.reserve(rows());
  for (const auto& m : members_) sums.push_back(m.size());
  return sums;
}

std::string MembershipMatrix::to_text() const {
  std::string out = std::to_string(rows()) + " " + std::to_string(cols()) + "\n";
  out.reserve(out.size() + rows() * cols() * 2);
  for (std::size_t i = 0; i < rows(); ++i) {
    for (std::size_t j = 0; j < cols(); ++j) {
      if (j > 0) out.push_back(' ');
      out.push_back(entry(i, j) ? '1' : '0');
    }
    out.push_back('\n');
  }
  return out;
}

MembershipMatrix MembershipMatrix::from_text(std::string_view text,
                                             std::string polygon_set_name,
                                             std::string grid_id) {
  std::istringstream in{std::string(text)};
  std::size_t k = 0;
  std::size_t n = 0;
  if (!(in >> k >> n)) throw Error("membership text: missing 'K n' header");
  std::vector<int> owner(n, -1);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      int v = 0;
      if (!(in >> v) || (v != 0 && v != 1)) {
        throw Error("membership text: entries must be 0/1");
      }
      if (v == 1) {
        if (owner[j] != -1) throw Error("membership text: column sums exceed 1");
        owner[j] = static_cast<int>(i);
      }
    }
  }
  return MembershipMatrix(std::move(polygon_set_name), std::move(grid_id), k,
                          std::move(owner));
}

MembershipMatrix membership_matrix(const Grid& grid, const PolygonSet& set) {
  validate(set);
  std::vector<BoundingBox> boxes;
  boxes.reserve(set.size());
  for (const Ring& r : set.polygons) {
    PolygonSet one{set.name, {r}, {"_"}};
    boxes.push_back(bounding_box(one));
  }
  std::vector<int> owner(grid.size(), -1);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const Point p = grid.points[j];
    int interior_owner = -1;
    for (std::size_t i = 0; i < set.size(); ++i) {
      const BoundingBox& b = boxes[i];
      if (p.x < b.xmin || p.x > b.xmax || p.y < b.ymin || p.y > b.ymax) continue;
      const Location loc = locate(p, set.polygons[i]);
      if (loc == Location::kOutside) continue;
      if (owner[j] == -1) owner[j] = static_cast<int>(i);
      if (loc == Location::kInside) {
        if (interior_owner != -1) {
          throw Error("polygons '" + set.labels[interior_owner] + "' and '" +
                      set.labels[i] + "' overlap at grid point " + std::to_string(j));
        }
        interior_owner = static_cast<int>(i);
      }
    }
  }
  MembershipMatrix m(set.name, grid.id(), set.size(), std::move(owner));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (m.members(i).empty()) {
      throw Error("polygon '" + set.labels[i] + "' in set '" + set.name +
                  "' has no grid point - increase resolution");
    }
  }
  return m;
}

}  // namespace aggvae::geometry
