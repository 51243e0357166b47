#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "floatpop/types.hpp"

namespace fptest {

inline floatpop::Ring rect_ring(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}};
}

inline floatpop::ZoneRecord rect_zone(std::string id, double x0, double y0, double x1, double y1,
                                      double area_km2 = 1.0,
                                      floatpop::LandUse lu = floatpop::LandUse::residential,
                                      int pokepoints = 0) {
  floatpop::ZoneRecord z;
  z.zone_id = std::move(id);
  z.polygons.push_back({rect_ring(x0, y0, x1, y1), {}});
  z.land_use = lu;
  z.area_km2 = area_km2;
  z.pokepoint_count = pokepoints;
  return z;
}

inline floatpop::NetworkEvent event(std::string_view date, int minute, std::string device, std::string tower,
                                    double kib = 4096.0, std::string category = "prepaid") {
  return {floatpop::parse_date(date), minute, std::move(device), std::move(tower), kib, std::move(category)};
}

/// Fresh, empty directory under the test temp root.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("floatpop_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& p, std::string_view text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace fptest
