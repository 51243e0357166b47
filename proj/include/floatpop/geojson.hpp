#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "floatpop/error.hpp"
#include "floatpop/geometry.hpp"
#include "floatpop/types.hpp"

namespace floatpop {

using json = nlohmann::json;

namespace detail {

inline Ring ring_from_json(const json& j, const std::string& zone_id) {
  if (!j.is_array()) throw GeometryError(zone_id, "ring is not an array");
  Ring ring;
  ring.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_array() || v.size() < 2 || !v[0].is_number() || !v[1].is_number())
      throw GeometryError(zone_id, "vertex is not a [lon, lat] pair");
    ring.push_back({v[0].get<double>(), v[1].get<double>()});
  }
  return ring;
}

inline Polygon polygon_from_json(const json& rings, const std::string& zone_id) {
  if (!rings.is_array() || rings.empty()) throw GeometryError(zone_id, "polygon has no rings");
  Polygon poly;
  poly.outer = ring_from_json(rings[0], zone_id);
  for (std::size_t i = 1; i < rings.size(); ++i)
    poly.holes.push_back(ring_from_json(rings[i], zone_id));
  return poly;
}

inline json ring_to_json(const Ring& ring) {
  json out = json::array();
  for (const auto& v : ring) out.push_back(json::array({v.lon, v.lat}));
  return out;
}

inline json polygon_to_json(const Polygon& poly) {
  json rings = json::array();
  rings.push_back(ring_to_json(poly.outer));
  for (const auto& h : poly.holes) rings.push_back(ring_to_json(h));
  return rings;
}

}  // namespace detail

inline std::vector<Polygon> geometry_from_json(const json& geom, const std::string& zone_id) {
  if (!geom.is_object() || !geom.contains("type") || !geom.contains("coordinates"))
    throw GeometryError(zone_id, "missing geometry");
  const std::string type = geom.at("type").get<std::string>();
  std::vector<Polygon> polys;
  if (type == "Polygon") {
    polys.push_back(detail::polygon_from_json(geom.at("coordinates"), zone_id));
  } else if (type == "MultiPolygon") {
    for (const auto& p : geom.at("coordinates"))
      polys.push_back(detail::polygon_from_json(p, zone_id));
  } else {
    throw GeometryError(zone_id, "unsupported geometry type '" + type + "'");
  }
  return polys;
}

inline json geometry_to_json(const std::vector<Polygon>& polys) {
  if (polys.size() == 1)
    return json{{"type", "Polygon"}, {"coordinates", detail::polygon_to_json(polys[0])}};
  json coords = json::array();
  for (const auto& p : polys) coords.push_back(detail::polygon_to_json(p));
  return json{{"type", "MultiPolygon"}, {"coordinates", coords}};
}

struct ZoneLoadReport {
  std::vector<std::string> warnings;
};

/// Reads a zone FeatureCollection. Properties: `zone_id`, `land_use`,
/// `area_km2` (computed on the sphere when absent).
inline std::vector<ZoneRecord> parse_zones_geojson(const json& doc, ZoneLoadReport* report = nullptr) {
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features"))
    throw InputError("zones: expected a GeoJSON FeatureCollection");
  std::vector<ZoneRecord> zones;
  std::set<std::string> seen;
  for (const auto& f : doc.at("features")) {
    const json props = f.value("properties", json::object());
    if (!props.contains("zone_id")) throw InputError("zones: feature without zone_id");
    ZoneRecord z;
    const auto& id = props.at("zone_id");
    z.zone_id = id.is_string() ? id.get<std::string>() : id.dump();
    if (z.zone_id.empty()) throw InputError("zones: empty zone_id");
    if (!seen.insert(z.zone_id).second)
      throw InputError("zones: duplicate zone_id '" + z.zone_id + "'");
    const auto lu = try_parse_land_use(props.value("land_use", ""));
    if (!lu) throw InputError("zones: zone '" + z.zone_id + "' has unknown land_use");
    z.land_use = *lu;
    z.polygons = geometry_from_json(f.value("geometry", json()), z.zone_id);
    validate_zone_geometry(z);
    const double computed = spherical_area_km2(z);
    if (props.contains("area_km2") && props.at("area_km2").is_number()) {
      z.area_km2 = props.at("area_km2").get<double>();
      if (report && std::abs(computed - z.area_km2) > 0.01 * z.area_km2)
        report->warnings.push_back(fmt::format(
            "zone '{}': stored area {:.4f} km2 differs from geometry {:.4f} km2", z.zone_id,
            z.area_km2, computed));
    } else {
      z.area_km2 = computed;
    }
    if (props.contains("pokepoint_count") && props.at("pokepoint_count").is_number_integer())
      z.pokepoint_count = props.at("pokepoint_count").get<int>();
    if (!(z.area_km2 > 0) || !std::isfinite(z.area_km2))
      throw InputError("zones: zone '" + z.zone_id + "' has non-positive area");
    zones.push_back(std::move(z));
  }
  return zones;
}

inline std::vector<ZoneRecord> parse_zones(const std::filesystem::path& path,
                                           ZoneLoadReport* report = nullptr) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open zones file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("zones file " + path.string() + ": " + e.what());
  }
  return parse_zones_geojson(doc, report);
}

inline json zones_to_geojson(const std::vector<ZoneRecord>& zones, bool with_pokepoints = false) {
  json features = json::array();
  for (const auto& z : zones) {
    json props{{"zone_id", z.zone_id}, {"land_use", std::string(to_string(z.land_use))}, {"area_km2", z.area_km2}};
    if (with_pokepoints) props["pokepoint_count"] = z.pokepoint_count;
    features.push_back(json{{"type", "Feature"}, {"properties", props}, {"geometry", geometry_to_json(z.polygons)}});
  }
  return json{{"type", "FeatureCollection"}, {"features", features}};
}

}  // namespace floatpop
