#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace aggvae::geometry {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Closed exterior ring; first vertex repeated as the last.
using Ring = std::vector<Point>;

struct BoundingBox {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;
  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
};

/// One boundary era: an ordered partition of the territory into areal units.
struct PolygonSet {
  std::string name;
  std::vector<Ring> polygons;
  std::vector<std::string> labels;  // one per polygon

  std::size_t size() const { return polygons.size(); }
};

/// Throws unless K >= 1 with one label per ring and every ring closed with
/// at least 4 vertices.
void validate(const PolygonSet& set);

PolygonSet parse_polygons(std::string_view geojson, std::string name);
PolygonSet load_polygons(const std::filesystem::path& path, std::string name);

/// GeoJSON FeatureCollection. `provenance` lands in a top-level member.
std::string to_geojson(const PolygonSet& set,
                       const std::map<std::string, std::string>& provenance = {});

BoundingBox bounding_box(const PolygonSet& set);
BoundingBox bounding_box(const PolygonSet& a, const PolygonSet& b);

double ring_area(const Ring& ring);

/// Regular lattice of cell-centre points, row-major in y then x.
struct Grid {
  std::vector<Point> points;
  BoundingBox box;
  int nx = 0;
  int ny = 0;
  double dx = 0.0;
  double dy = 0.0;

  std::size_t size() const { return points.size(); }
  double cell_area() const { return dx * dy; }
  /// Fingerprint of the lattice; two grids with equal ids are identical.
  std::string id() const;
};

Grid build_grid(const BoundingBox& box, int resolution);
Grid build_grid(const PolygonSet& set, int resolution);

enum class Location { kOutside, kBoundary, kInside };

/// Exact orientation-based classification; boundary hits are detected before
/// the even-odd crossing count.
Location locate(Point p, const Ring& ring);

/// Closed-polygon membership: interior or boundary.
bool point_in_polygon(Point p, const Ring& ring);

/// Binary K x n lookup table. Column j holds a single one at the row of the
/// polygon owning grid point j, or is all zero for points outside the
/// territory. Points on shared edges go to the lowest polygon index.
class MembershipMatrix {
 public:
  MembershipMatrix() = default;
  MembershipMatrix(std::string polygon_set_name, std::string grid_id,
                   std::size_t rows, std::vector<int> owner);

  std::size_t rows() const { return members_.size(); }
  std::size_t cols() const { return owner_.size(); }
  const std::string& polygon_set_name() const { return polygon_set_name_; }
  const std::string& grid_id() const { return grid_id_; }

  /// Owning row of column j, or -1.
  int owner(std::size_t j) const { return owner_[j]; }
  /// Column indices in row i, ascending.
  const std::vector<std::size_t>& members(std::size_t i) const {
    return members_[i];
  }
  int entry(std::size_t i, std::size_t j) const {
    return owner_[j] == static_cast<int>(i) ? 1 : 0;
  }

  Eigen::MatrixXd dense() const;
  std::vector<std::size_t> row_sums() const;

  /// "K n" on the first line, then K rows of space-separated 0/1.
  std::string to_text() const;
  static MembershipMatrix from_text(std::string_view text,
                                    std::string polygon_set_name = {},
                                    std::string grid_id = {});

 private:
  std::string polygon_set_name_;
  std::string grid_id_;
  std::vector<int> owner_;
  std::vector<std::vector<std::size_t>> members_;
};

/// Throws if a grid point is strictly interior to two polygons or if some
/// polygon receives no grid point.
MembershipMatrix membership_matrix(const Grid& grid, const PolygonSet& set);

}  // namespace aggvae::geometry
