#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "floatpop/error.hpp"
#include "floatpop/types.hpp"

namespace floatpop {

enum class Containment { outside, boundary, inside };

struct BoundingBox {
  double min_lon = 0, min_lat = 0, max_lon = 0, max_lat = 0;

  bool contains(GeoPoint p) const {
    return p.lon >= min_lon && p.lon <= max_lon && p.lat >= min_lat && p.lat <= max_lat;
  }
  bool intersects(const BoundingBox& o) const {
    return min_lon <= o.max_lon && o.min_lon <= max_lon && min_lat <= o.max_lat &&
           o.min_lat <= max_lat;
  }
};

namespace detail {

inline double cross(GeoPoint o, GeoPoint a, GeoPoint b) {
  return (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon);
}

inline bool on_segment(GeoPoint p, GeoPoint a, GeoPoint b) {
  const double dx = b.lon - a.lon, dy = b.lat - a.lat;
  const double len2 = dx * dx + dy * dy;
  if (len2 == 0.0) return p == a;
  if (std::abs(cross(a, b, p)) > 1e-12 * len2) return false;
  return p.lon >= std::min(a.lon, b.lon) && p.lon <= std::max(a.lon, b.lon) &&
         p.lat >= std::min(a.lat, b.lat) && p.lat <= std::max(a.lat, b.lat);
}

inline int orientation(GeoPoint a, GeoPoint b, GeoPoint c) {
  const double v = cross(a, b, c);
  if (v > 0) return 1;
  if (v < 0) return -1;
  return 0;
}

inline bool segments_intersect(GeoPoint p1, GeoPoint p2, GeoPoint q1, GeoPoint q2) {
  const int o1 = orientation(p1, p2, q1), o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1), o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(q1, p1, p2)) return true;
  if (o2 == 0 && on_segment(q2, p1, p2)) return true;
  if (o3 == 0 && on_segment(p1, q1, q2)) return true;
  if (o4 == 0 && on_segment(p2, q1, q2)) return true;
  return false;
}

}  // namespace detail

/// Even-odd crossing test with an explicit boundary case.
inline Containment locate_in_ring(GeoPoint p, const Ring& ring) {
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const GeoPoint a = ring[j], b = ring[i];
    if (detail::on_segment(p, a, b)) return Containment::boundary;
    if ((b.lat > p.lat) != (a.lat > p.lat)) {
      const double x = b.lon + (p.lat - b.lat) * (a.lon - b.lon) / (a.lat - b.lat);
      if (p.lon < x) inside = !inside;
    }
  }
  return inside ? Containment::inside : Containment::outside;
}

inline Containment locate_in_polygon(GeoPoint p, const Polygon& poly) {
  const Containment outer = locate_in_ring(p, poly.outer);
  if (outer != Containment::inside) return outer;
  for (const auto& hole : poly.holes) {
    const Containment h = locate_in_ring(p, hole);
    if (h == Containment::boundary) return Containment::boundary;
    if (h == Containment::inside) return Containment::outside;
  }
  return Containment::inside;
}

inline Containment locate_in_zone(GeoPoint p, const ZoneRecord& zone) {
  Containment best = Containment::outside;
  for (const auto& poly : zone.polygons) {
    const Containment c = locate_in_polygon(p, poly);
    if (c == Containment::inside) return c;
    if (c == Containment::boundary) best = c;
  }
  return best;
}

inline BoundingBox bounding_box(const ZoneRecord& zone) {
  BoundingBox b{INFINITY, INFINITY, -INFINITY, -INFINITY};
  for (const auto& poly : zone.polygons)
    for (const auto& v : poly.outer) {
      b.min_lon = std::min(b.min_lon, v.lon);
      b.max_lon = std::max(b.max_lon, v.lon);
      b.min_lat = std::min(b.min_lat, v.lat);
      b.max_lat = std::max(b.max_lat, v.lat);
    }
  return b;
}

/// Rejects open, degenerate, non-finite or self-intersecting rings.
inline void validate_ring(const std::string& zone_id, const Ring& ring) {
  if (ring.size() < 4) throw GeometryError(zone_id, "ring has fewer than 4 vertices");
  if (!(ring.front() == ring.back())) throw GeometryError(zone_id, "ring is not closed");
  for (const auto& v : ring) {
    if (!std::isfinite(v.lon) || !std::isfinite(v.lat) || v.lon < -180 || v.lon > 180 ||
        v.lat < -90 || v.lat > 90)
      throw GeometryError(zone_id, "vertex outside WGS84 range");
  }
  const std::size_t n = ring.size() - 1;  // number of edges
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (detail::segments_intersect(ring[i], ring[i + 1], ring[j], ring[j + 1]))
        throw GeometryError(zone_id, "ring is self-intersecting");
    }
  }
}

inline void validate_zone_geometry(const ZoneRecord& zone) {
  if (zone.polygons.empty()) throw GeometryError(zone.zone_id, "no polygon");
  for (const auto& poly : zone.polygons) {
    validate_ring(zone.zone_id, poly.outer);
    for (const auto& h : poly.holes) validate_ring(zone.zone_id, h);
  }
}

/// Index of the first zone (in input order) whose polygon contains `p`,
/// boundary included.
inline std::optional<std::size_t> locate_zone_index(GeoPoint p, std::span<const ZoneRecord> zones) {
  for (std::size_t i = 0; i < zones.size(); ++i) {
    if (zones[i].polygons.empty()) throw GeometryError(zones[i].zone_id, "no polygon");
    if (locate_in_zone(p, zones[i]) != Containment::outside) return i;
  }
  return std::nullopt;
}

inline std::optional<std::string> point_in_zone(GeoPoint p, std::span<const ZoneRecord> zones) {
  for (const auto& z : zones) {
    for (const auto& poly : z.polygons)
      if (poly.outer.size() < 4 || !(poly.outer.front() == poly.outer.back()))
        throw GeometryError(z.zone_id, "malformed polygon");
  }
  auto idx = locate_zone_index(p, zones);
  if (!idx) return std::nullopt;
  return zones[*idx].zone_id;
}

inline constexpr double kEarthRadiusKm = 6371.0088;

/// Ring area on the sphere from the spherical-excess line integral
/// A = R^2/2 * |sum (lon2 - lon1)(2 + sin lat1 + sin lat2)|.
inline double spherical_ring_area_km2(const Ring& ring) {
  constexpr double deg = std::numbers::pi / 180.0;
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const GeoPoint a = ring[i], b = ring[i + 1];
    sum += (b.lon - a.lon) * deg * (2.0 + std::sin(a.lat * deg) + std::sin(b.lat * deg));
  }
  return std::abs(sum) * kEarthRadiusKm * kEarthRadiusKm / 2.0;
}

inline double spherical_area_km2(const ZoneRecord& zone) {
  double area = 0.0;
  for (const auto& poly : zone.polygons) {
    area += spherical_ring_area_km2(poly.outer);
    for (const auto& h : poly.holes) area -= spherical_ring_area_km2(h);
  }
  return area;
}

/// Sampled pairwise check that zones do not overlap: a grid of probe points
/// over each bounding-box intersection plus every vertex of both zones.
/// Shared edges and vertices are allowed.
inline void validate_non_overlapping(std::span<const ZoneRecord> zones, int samples_per_axis = 12) {
  std::vector<BoundingBox> boxes;
  boxes.reserve(zones.size());
  for (const auto& z : zones) boxes.push_back(bounding_box(z));

  auto strictly_inside = [](GeoPoint p, const ZoneRecord& z) {
    return locate_in_zone(p, z) == Containment::inside;
  };
  for (std::size_t i = 0; i < zones.size(); ++i) {
    for (std::size_t j = i + 1; j < zones.size(); ++j) {
      if (!boxes[i].intersects(boxes[j])) continue;
      const BoundingBox box{std::max(boxes[i].min_lon, boxes[j].min_lon),
                            std::max(boxes[i].min_lat, boxes[j].min_lat),
                            std::min(boxes[i].max_lon, boxes[j].max_lon),
                            std::min(boxes[i].max_lat, boxes[j].max_lat)};
      bool overlap = false;
      for (int a = 0; a < samples_per_axis && !overlap; ++a) {
        for (int b = 0; b < samples_per_axis && !overlap; ++b) {
          const GeoPoint p{box.min_lon + (a + 0.5) / samples_per_axis * (box.max_lon - box.min_lon),
                           box.min_lat + (b + 0.5) / samples_per_axis * (box.max_lat - box.min_lat)};
          overlap = strictly_inside(p, zones[i]) && strictly_inside(p, zones[j]);
        }
      }
      for (const auto& poly : zones[i].polygons)
        for (const auto& v : poly.outer) overlap = overlap || strictly_inside(v, zones[j]);
      for (const auto& poly : zones[j].polygons)
        for (const auto& v : poly.outer) overlap = overlap || strictly_inside(v, zones[i]);
      if (overlap)
        throw GeometryError(zones[i].zone_id, "overlaps zone '" + zones[j].zone_id + "'");
    }
  }
}

}  // namespace floatpop
