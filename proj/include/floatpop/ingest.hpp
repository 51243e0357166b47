#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "floatpop/error.hpp"
#include "floatpop/geojson.hpp"
#include "floatpop/geometry.hpp"
#include "floatpop/types.hpp"

namespace floatpop {

// ---------------------------------------------------------------------------
// Study configuration
// ---------------------------------------------------------------------------

/// Plain-text `key = value` study configuration. `#` starts a comment.
/// Date lists are comma separated; an item may be a range `a..b`.
struct StudyConfig {
  std::optional<Date> launch_date;
  StudyCalendar calendar;
  TimeGrid grid;
  double max_zone_area_km2 = 20.0;
  int lowess_bandwidth_min = 30;
  std::vector<std::string> category_allowlist;  // empty accepts every category
  double min_mib = 2.5;
  double max_mib = 500.0;
  // Input files, resolved against the directory holding the config.
  std::filesystem::path events_path, towers_path, zones_path, pois_path;
  // Entries as read, in file order.
  std::vector<std::pair<std::string, std::string>> entries;
};

inline std::vector<Date> parse_date_list(std::string_view value) {
  std::vector<Date> dates;
  value = detail::trim(value);
  if (value.empty()) return dates;
  for (auto item : detail::split(value, ',')) {
    item = detail::trim(item);
    if (item.empty()) continue;
    const auto dots = item.find("..");
    if (dots == std::string_view::npos) {
      dates.push_back(parse_date(item));
      continue;
    }
    Date a = parse_date(detail::trim(item.substr(0, dots)));
    const Date b = parse_date(detail::trim(item.substr(dots + 2)));
    if (b < a) throw ConfigError("date range '" + std::string(item) + "' is reversed");
    for (; a <= b; a = add_days(a, 1)) dates.push_back(a);
  }
  return dates;
}

/// Reads `key = value` lines into ordered pairs.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text,
                                                                         std::string_view source) {
  std::vector<std::pair<std::string, std::string>> out;
  int lineno = 0;
  for (auto line : detail::split(text, '\n')) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(fmt::format("{}:{}: expected key = value", source, lineno));
    out.emplace_back(std::string(detail::trim(line.substr(0, eq))),
                     std::string(detail::trim(line.substr(eq + 1))));
  }
  return out;
}

inline StudyConfig parse_study_config_text(std::string_view text,
                                           const std::filesystem::path& base_dir = {},
                                           std::string_view source = "config") {
  StudyConfig cfg;
  cfg.entries = parse_key_values(text, source);
  std::optional<std::vector<Date>> pre, post, excluded;
  for (const auto& [key, value] : cfg.entries) {
    if (key == "launch_date") cfg.launch_date = parse_date(value);
    else if (key == "pre_dates") pre = parse_date_list(value);
    else if (key == "post_dates") post = parse_date_list(value);
    else if (key == "excluded_dates") excluded = parse_date_list(value);
    else if (key == "grid_start") cfg.grid.start = parse_clock(value);
    else if (key == "grid_end") cfg.grid.end = parse_clock(value);
    else if (key == "grid_step") cfg.grid.step = parse_integer(value, key);
    else if (key == "max_zone_area_km2") cfg.max_zone_area_km2 = parse_real(value, key);
    else if (key == "lowess_bandwidth_min") cfg.lowess_bandwidth_min = parse_integer(value, key);
    else if (key == "min_mib") cfg.min_mib = parse_real(value, key);
    else if (key == "max_mib") cfg.max_mib = parse_real(value, key);
    else if (key == "category_allowlist") {
      cfg.category_allowlist.clear();
      for (auto c : detail::split(value, ','))
        if (auto t = detail::trim(c); !t.empty() && t != "*") cfg.category_allowlist.emplace_back(t);
    } else if (key == "events") cfg.events_path = base_dir / value;
    else if (key == "towers") cfg.towers_path = base_dir / value;
    else if (key == "zones") cfg.zones_path = base_dir / value;
    else if (key == "pois") cfg.pois_path = base_dir / value;
    else throw ConfigError(fmt::format("{}: unknown key '{}'", source, key));
  }
  // Without explicit lists, a launch date implies a week on either side.
  if (cfg.launch_date && (!pre || !post)) {
    if (!pre) {
      pre.emplace();
      for (int i = 7; i >= 1; --i) pre->push_back(add_days(*cfg.launch_date, -i));
    }
    if (!post) {
      post.emplace();
      for (int i = 1; i <= 7; ++i) post->push_back(add_days(*cfg.launch_date, i));
    }
    if (!excluded) excluded = std::vector<Date>{*cfg.launch_date};
  }
  cfg.calendar = StudyCalendar(pre.value_or(std::vector<Date>{}), post.value_or(std::vector<Date>{}),
                               excluded.value_or(std::vector<Date>{}));
  if (cfg.launch_date) {
    for (const auto& d : cfg.calendar.pre_dates())
      if (!(d < *cfg.launch_date)) throw ConfigError("pre date " + format_date(d) + " is not before launch");
    for (const auto& d : cfg.calendar.post_dates())
      if (!(*cfg.launch_date < d)) throw ConfigError("post date " + format_date(d) + " is not after launch");
  }
  cfg.grid.validate();
  if (cfg.lowess_bandwidth_min < 3) throw ConfigError("lowess_bandwidth_min must be >= 3");
  if (!(cfg.min_mib >= 0) || !(cfg.max_mib > cfg.min_mib))
    throw ConfigError("min_mib/max_mib must satisfy 0 <= min < max");
  if (!(cfg.max_zone_area_km2 > 0)) throw ConfigError("max_zone_area_km2 must be positive");
  return cfg;
}

inline StudyConfig parse_study_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_study_config_text(text, path.parent_path(), path.string());
}

inline std::string format_study_config(const StudyConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg.entries) out += k + " = " + v + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// CSV inputs
// ---------------------------------------------------------------------------

/// Per-reason counts of rejected event rows.
struct RejectionReport {
  std::size_t accepted = 0;
  std::map<std::string, std::size_t> rejected;

  std::size_t total_rejected() const {
    std::size_t n = 0;
    for (const auto& [_, c] : rejected) n += c;
    return n;
  }
};

inline constexpr std::string_view kEventsHeader = "timestamp,device_id,tower_id,kib,category";

namespace detail {

inline std::ifstream open_csv(const std::filesystem::path& path, std::string_view expected_header,
                              std::string_view what) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + std::string(what) + " file " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw InputError(std::string(what) + " file " + path.string() + " has no header");
  if (trim(header) != expected_header)
    throw InputError(fmt::format("{} file {}: expected header '{}'", what, path.string(), expected_header));
  return in;
}

/// Parses one events row; returns the rejection reason or empty on success.
inline std::string_view parse_event_row(std::string_view line, NetworkEvent& ev) {
  const auto fields = split(line, ',');
  if (fields.size() != 5) return "field_count";
  const auto ts = trim(fields[0]);
  if (ts.size() != 16 || (ts[10] != 'T' && ts[10] != ' ')) return "bad_timestamp";
  const auto date = try_parse_date(ts.substr(0, 10));
  const auto minute = try_parse_clock(ts.substr(11));
  if (!date || !minute) return "bad_timestamp";
  const auto device = trim(fields[1]);
  const auto tower = trim(fields[2]);
  if (device.empty()) return "empty_device_id";
  if (tower.empty()) return "empty_tower_id";
  const auto kib_s = trim(fields[3]);
  double kib = 0;
  auto [ptr, ec] = std::from_chars(kib_s.data(), kib_s.data() + kib_s.size(), kib);
  if (ec != std::errc{} || ptr != kib_s.data() + kib_s.size() || !std::isfinite(kib)) return "bad_kib";
  if (kib < 0) return "negative_kib";
  ev.date = *date;
  ev.minute = *minute;
  ev.device_id.assign(device);
  ev.tower_id.assign(tower);
  ev.kib = kib;
  ev.category.assign(trim(fields[4]));
  return {};
}

}  // namespace detail

/// Streams well-formed events to `sink` in file order. Malformed rows are
/// counted by reason and skipped.
template <class Sink>
RejectionReport parse_events(const std::filesystem::path& path, Sink&& sink) {
  auto in = detail::open_csv(path, kEventsHeader, "events");
  RejectionReport report;
  NetworkEvent ev;
  std::string line;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto reason = detail::parse_event_row(line, ev);
    if (!reason.empty()) {
      ++report.rejected[std::string(reason)];
      continue;
    }
    ++report.accepted;
    sink(static_cast<const NetworkEvent&>(ev));
  }
  return report;
}

inline std::vector<Tower> parse_towers(const std::filesystem::path& path) {
  auto in = detail::open_csv(path, "tower_id,lon,lat", "towers");
  std::vector<Tower> towers;
  std::set<std::string> seen;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 3) throw InputError(fmt::format("towers {}:{}: expected 3 fields", path.string(), lineno));
    Tower t{std::string(detail::trim(f[0])),
            {parse_real(f[1], "tower lon"), parse_real(f[2], "tower lat")}};
    if (t.tower_id.empty()) throw InputError(fmt::format("towers {}:{}: empty tower_id", path.string(), lineno));
    if (t.location.lon < -180 || t.location.lon > 180 || t.location.lat < -90 || t.location.lat > 90)
      throw InputError(fmt::format("towers {}:{}: coordinates out of range", path.string(), lineno));
    if (!seen.insert(t.tower_id).second)
      throw InputError("towers: duplicate tower_id '" + t.tower_id + "'");
    towers.push_back(std::move(t));
  }
  return towers;
}

/// POI file `lon,lat,kind`. PokéStops and gyms count alike, so kind is
/// only checked for presence.
inline std::vector<GeoPoint> parse_pois(const std::filesystem::path& path) {
  auto in = detail::open_csv(path, "lon,lat,kind", "POIs");
  std::vector<GeoPoint> pois;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 3) throw InputError(fmt::format("POIs {}:{}: expected 3 fields", path.string(), lineno));
    pois.push_back({parse_real(f[0], "POI lon"), parse_real(f[1], "POI lat")});
  }
  return pois;
}

// ---------------------------------------------------------------------------
// Zone selection
// ---------------------------------------------------------------------------

/// Counts POIs per zone with first-match point-in-zone semantics.
inline std::vector<ZoneRecord> attach_pokepoints(std::vector<ZoneRecord> zones,
                                                 std::span<const GeoPoint> pois) {
  std::vector<BoundingBox> boxes;
  for (auto& z : zones) {
    z.pokepoint_count = 0;
    boxes.push_back(bounding_box(z));
  }
  for (const auto& p : pois) {
    for (std::size_t i = 0; i < zones.size(); ++i) {
      if (!boxes[i].contains(p)) continue;
      if (locate_in_zone(p, zones[i]) != Containment::outside) {
        ++zones[i].pokepoint_count;
        break;
      }
    }
  }
  return zones;
}

/// Keeps zones under the area cap that hold at least one tower and one
/// PokéPoint; output sorted by zone_id.
inline std::vector<ZoneRecord> select_zones(std::span<const ZoneRecord> zones,
                                            std::span<const Tower> towers,
                                            double max_area_km2 = 20.0) {
  std::vector<int> tower_count(zones.size(), 0);
  for (const auto& t : towers)
    if (auto idx = locate_zone_index(t.location, zones)) ++tower_count[*idx];
  std::vector<ZoneRecord> kept;
  for (std::size_t i = 0; i < zones.size(); ++i) {
    const auto& z = zones[i];
    if (z.area_km2 < max_area_km2 && tower_count[i] >= 1 && z.pokepoint_count >= 1) kept.push_back(z);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const ZoneRecord& a, const ZoneRecord& b) { return a.zone_id < b.zone_id; });
  return kept;
}

}  // namespace floatpop
