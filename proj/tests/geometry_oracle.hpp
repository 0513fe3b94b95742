#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "aggvae/geometry.hpp"

namespace aggvae::testing {

using geometry::BoundingBox;
using geometry::Point;
using geometry::PolygonSet;
using geometry::Ring;

inline Ring square(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}};
}

// Independent oracle: Sunday's winding number, with an explicit on-segment
// check for boundary points.
inline bool on_segment(Point p, Point a, Point b) {
  const double c = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
  if (c != 0.0) return false;
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

inline int winding_number(Point p, const Ring& ring) {
  int wn = 0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const Point a = ring[i];
    const Point b = ring[i + 1];
    const double is_left = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
    if (a.y <= p.y) {
      if (b.y > p.y && is_left > 0) ++wn;
    } else {
      if (b.y <= p.y && is_left < 0) --wn;
    }
  }
  return wn;
}

inline bool oracle_contains(Point p, const Ring& ring) {
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    if (on_segment(p, ring[i], ring[i + 1])) return true;
  }
  return winding_number(p, ring) != 0;
}

// Star-shaped ring around `centre`; concave whenever radii vary.
inline Ring random_star(std::mt19937_64& rng, Point centre, double rmin, double rmax, int vertices,
                 bool integer_coords) {
  std::uniform_real_distribution<double> angle_jitter(0.0, 0.9);
  std::uniform_real_distribution<double> radius(rmin, rmax);
  Ring ring;
  for (int k = 0; k < vertices; ++k) {
    const double t = 2.0 * std::numbers::pi * (k + angle_jitter(rng)) / vertices;
    double x = centre.x + radius(rng) * std::cos(t);
    double y = centre.y + radius(rng) * std::sin(t);
    if (integer_coords) {
      x = std::round(x);
      y = std::round(y);
    }
    if (!ring.empty() && ring.back() == Point{x, y}) continue;
    ring.push_back({x, y});
  }
  ring.push_back(ring.front());
  return ring;
}

// Random guillotine partition of a rectangle into `pieces` rectangles.
inline PolygonSet guillotine(std::mt19937_64& rng, BoundingBox box, int pieces) {
  std::vector<BoundingBox> cells{box};
  std::uniform_real_distribution<double> cut(0.25, 0.75);
  while (static_cast<int>(cells.size()) < pieces) {
    std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
    const std::size_t i = pick(rng);
    const BoundingBox c = cells[i];
    const double f = cut(rng);
    if (c.width() >= c.height()) {
      const double x = c.xmin + f * c.width();
      cells[i] = {c.xmin, c.ymin, x, c.ymax};
      cells.push_back({x, c.ymin, c.xmax, c.ymax});
    } else {
      const double y = c.ymin + f * c.height();
      cells[i] = {c.xmin, c.ymin, c.xmax, y};
      cells.push_back({c.xmin, y, c.xmax, c.ymax});
    }
  }
  PolygonSet set;
  set.name = "guillotine";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    set.polygons.push_back(square(c.xmin, c.ymin, c.xmax, c.ymax));
    set.labels.push_back("g" + std::to_string(i));
  }
  return set;
}

// Triangle fan around an interior point of the unit square.
inline PolygonSet fan(std::mt19937_64& rng, int extra_vertices) {
  std::uniform_real_distribution<double> u(0.3, 0.7);
  const Point c{u(rng), u(rng)};
  std::vector<double> perimeter{0.0, 1.0, 2.0, 3.0};
  std::uniform_real_distribution<double> pos(0.0, 4.0);
  for (int k = 0; k < extra_vertices; ++k) perimeter.push_back(pos(rng));
  std::sort(perimeter.begin(), perimeter.end());
  auto at = [](double s) -> Point {
    if (s < 1.0) return {s, 0.0};
    if (s < 2.0) return {1.0, s - 1.0};
    if (s < 3.0) return {3.0 - s, 1.0};
    return {0.0, 4.0 - s};
  };
  PolygonSet set;
  set.name = "fan";
  for (std::size_t i = 0; i < perimeter.size(); ++i) {
    const Point a = at(perimeter[i]);
    const Point b = at(perimeter[(i + 1) % perimeter.size()]);
    if (a == b) continue;
    // Non-straight boundary segments pick up the corner between them.
    Ring r{c, a};
    const double s0 = perimeter[i];
    double s1 = perimeter[(i + 1) % perimeter.size()];
    if (s1 <= s0) s1 += 4.0;
    for (double corner = std::floor(s0) + 1.0; corner < s1; corner += 1.0) {
      r.push_back(at(std::fmod(corner, 4.0)));
    }
    r.push_back(b);
    r.push_back(c);
    set.polygons.push_back(r);
    set.labels.push_back("t" + std::to_string(set.labels.size()));
  }
  return set;
}

}  // namespace aggvae::testing
