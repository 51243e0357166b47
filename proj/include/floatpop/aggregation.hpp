#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "floatpop/geometry.hpp"
#include "floatpop/io.hpp"
#include "floatpop/smoothing.hpp"
#include "floatpop/types.hpp"

namespace floatpop {

/// tower_id -> zone_id for every tower that lies in some zone.
using TowerAssignment = std::map<std::string, std::string>;

inline TowerAssignment assign_towers(std::span<const Tower> towers, std::span<const ZoneRecord> zones) {
  TowerAssignment out;
  for (const auto& t : towers)
    if (auto idx = locate_zone_index(t.location, zones)) out.emplace(t.tower_id, zones[*idx].zone_id);
  return out;
}

/// Floating-population profile of one zone on one date.
struct ZoneProfile {
  std::string zone_id;
  Date date{};
  std::vector<double> values;
};

/// Sums smoothed tower series into zone profiles for one date. Zones are
/// returned in the order given; towers without a series contribute zero.
inline std::vector<ZoneProfile> aggregate_zone(std::span<const SmoothedSeries> tower_series,
                                               const TowerAssignment& assignment,
                                               std::span<const ZoneRecord> zones, Date date,
                                               std::size_t grid_length) {
  std::map<std::string, std::size_t> zone_index;
  std::vector<ZoneProfile> out;
  out.reserve(zones.size());
  for (const auto& z : zones) {
    zone_index.emplace(z.zone_id, out.size());
    out.push_back({z.zone_id, date, std::vector<double>(grid_length, 0.0)});
  }
  for (const auto& s : tower_series) {
    if (!(s.date == date)) continue;
    auto t = assignment.find(s.key);
    if (t == assignment.end()) continue;
    auto z = zone_index.find(t->second);
    if (z == zone_index.end()) continue;
    if (s.values.size() != grid_length)
      throw InputError("series for tower '" + s.key + "' does not match the time grid");
    auto& dst = out[z->second].values;
    for (std::size_t m = 0; m < grid_length; ++m) dst[m] += s.values[m];
  }
  return out;
}

/// Regression input table: one smoothed series per (zone, date).
class ProfileTable {
 public:
  ProfileTable() = default;
  ProfileTable(TimeGrid grid, std::vector<std::string> zone_ids, std::vector<Date> dates)
      : grid_(grid), zone_ids_(std::move(zone_ids)), dates_(std::move(dates)),
        data_(zone_ids_.size() * dates_.size() * grid_.size(), 0.0) {}

  const TimeGrid& grid() const { return grid_; }
  const std::vector<std::string>& zone_ids() const { return zone_ids_; }
  const std::vector<Date>& dates() const { return dates_; }

  std::span<double> series(std::size_t zone, std::size_t date) {
    return {data_.data() + (zone * dates_.size() + date) * grid_.size(), grid_.size()};
  }
  std::span<const double> series(std::size_t zone, std::size_t date) const {
    return {data_.data() + (zone * dates_.size() + date) * grid_.size(), grid_.size()};
  }
  double at(std::size_t zone, std::size_t date, std::size_t minute_index) const {
    return data_[(zone * dates_.size() + date) * grid_.size() + minute_index];
  }

  void set_profile(const ZoneProfile& p) {
    const auto zi = std::find(zone_ids_.begin(), zone_ids_.end(), p.zone_id);
    const auto di = std::find(dates_.begin(), dates_.end(), p.date);
    if (zi == zone_ids_.end() || di == dates_.end())
      throw InputError("profile for unknown zone/date " + p.zone_id + " " + format_date(p.date));
    auto dst = series(static_cast<std::size_t>(zi - zone_ids_.begin()),
                      static_cast<std::size_t>(di - dates_.begin()));
    if (p.values.size() != dst.size()) throw InputError("profile length does not match grid");
    std::copy(p.values.begin(), p.values.end(), dst.begin());
  }

 private:
  TimeGrid grid_;
  std::vector<std::string> zone_ids_;
  std::vector<Date> dates_;
  std::vector<double> data_;
};

/// CSV `zone_id,date,minute,value`, minute as HH:MM.
inline std::string format_profiles_csv(const ProfileTable& table) {
  std::string out = "zone_id,date,minute,value\n";
  for (std::size_t z = 0; z < table.zone_ids().size(); ++z)
    for (std::size_t d = 0; d < table.dates().size(); ++d) {
      const auto s = table.series(z, d);
      const std::string prefix = table.zone_ids()[z] + "," + format_date(table.dates()[d]) + ",";
      for (std::size_t m = 0; m < s.size(); ++m)
        out += prefix + format_clock(table.grid().minute_at(m)) + "," + fmt_real(s[m]) + "\n";
    }
  return out;
}

inline ProfileTable parse_profiles_csv(std::string_view text, TimeGrid grid,
                                       std::vector<std::string> zone_ids, std::vector<Date> dates) {
  ProfileTable table(grid, zone_ids, dates);
  std::map<std::string, std::size_t> zi;
  for (std::size_t i = 0; i < zone_ids.size(); ++i) zi.emplace(zone_ids[i], i);
  auto lines = detail::split(text, '\n');
  if (lines.empty() || detail::trim(lines[0]) != "zone_id,date,minute,value")
    throw StateError("profiles file has an unexpected header");
  std::size_t filled = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto line = detail::trim(lines[i]);
    if (line.empty()) continue;
    auto f = detail::split(line, ',');
    if (f.size() != 4) throw StateError("malformed profiles row");
    auto z = zi.find(std::string(f[0]));
    auto d = std::find(dates.begin(), dates.end(), parse_date(f[1]));
    auto m = grid.index_of(parse_clock(f[2]));
    if (z == zi.end() || d == dates.end() || !m) throw StateError("profiles row outside the study design");
    table.series(z->second, static_cast<std::size_t>(d - dates.begin()))[*m] = parse_real(f[3], "profile value");
    ++filled;
  }
  if (filled != zone_ids.size() * dates.size() * grid.size())
    throw StateError("profiles file does not cover every zone, date and minute");
  return table;
}

}  // namespace floatpop
