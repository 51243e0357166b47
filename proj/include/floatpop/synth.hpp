#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "floatpop/experiment.hpp"
#include "floatpop/geojson.hpp"
#include "floatpop/ingest.hpp"
#include "floatpop/io.hpp"
#include "floatpop/types.hpp"

namespace floatpop::synth {

// ---------------------------------------------------------------------------
// Random variates. std:: distributions are implementation defined, so the
// generator draws everything from the raw mt19937_64 stream.
// ---------------------------------------------------------------------------

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream for sub-task `index` of a run seeded with `seed`.
inline Engine substream(std::uint64_t seed, std::uint64_t index) {
  return Engine(splitmix64(seed ^ splitmix64(index + 0x5851f42d4c957f2dULL)));
}

inline double uniform01(Engine& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Engine& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline std::size_t uniform_index(Engine& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

inline double exponential(Engine& rng, double rate) { return -std::log1p(-uniform01(rng)) / rate; }

inline double standard_normal(Engine& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Marsaglia-Tsang; shape < 1 via the u^(1/shape) boost.
inline double gamma(Engine& rng, double shape, double scale) {
  if (shape < 1.0) {
    double u = uniform01(rng);
    while (u <= 0.0) u = uniform01(rng);
    return gamma(rng, shape + 1.0, scale) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0, c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01(rng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
  }
}

/// Knuth's multiplication method; fine for the moderate means used here.
inline int poisson(Engine& rng, double mean) {
  if (mean <= 0) return 0;
  if (mean > 500) return std::max(0, static_cast<int>(std::lround(mean + std::sqrt(mean) * standard_normal(rng))));
  const double limit = std::exp(-mean);
  int k = 0;
  double prod = uniform01(rng);
  while (prod > limit) {
    ++k;
    prod *= uniform01(rng);
  }
  return k;
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

/// Piecewise-linear rate curve (events per device-minute) over minute of day.
struct RateProfile {
  std::vector<std::pair<int, double>> knots;  // sorted by minute

  double at(int minute) const {
    if (knots.empty()) return 0.0;
    if (minute <= knots.front().first) return knots.front().second;
    if (minute >= knots.back().first) return knots.back().second;
    for (std::size_t i = 1; i < knots.size(); ++i)
      if (minute <= knots[i].first) {
        const auto [m0, r0] = knots[i - 1];
        const auto [m1, r1] = knots[i];
        return r0 + (r1 - r0) * (minute - m0) / static_cast<double>(m1 - m0);
      }
    return knots.back().second;
  }
};

inline RateProfile parse_rate_profile(std::string_view s) {
  RateProfile p;
  for (auto item : detail::split(s, ',')) {
    item = detail::trim(item);
    if (item.empty()) continue;
    const auto sp = item.find(' ');
    if (sp == std::string_view::npos) throw ConfigError("rate profile knot '" + std::string(item) + "' needs 'HH:MM rate'");
    const double r = parse_real(item.substr(sp + 1), "rate");
    if (r < 0) throw ConfigError("rate profile values must be non-negative");
    p.knots.emplace_back(parse_clock(detail::trim(item.substr(0, sp))), r);
  }
  std::sort(p.knots.begin(), p.knots.end());
  if (p.knots.empty()) throw ConfigError("empty rate profile");
  return p;
}

inline std::string format_rate_profile(const RateProfile& p) {
  std::string out;
  for (const auto& [m, r] : p.knots) out += (out.empty() ? "" : ", ") + format_clock(m) + " " + fmt_real(r);
  return out;
}

struct EffectSpec {
  DayGroup day_group = DayGroup::business;
  int start_minute = 0;
  int end_minute = 0;  // inclusive
  double multiplier = 1.0;
};

struct SynthScenario {
  int n_zones = 50;
  int towers_per_zone_min = 3;
  int towers_per_zone_max = 3;
  int devices = 5000;
  std::array<double, 3> land_use_mix{0.5, 0.2, 0.3};  // residential, business_only, mixed_activities
  double area_median_km2 = 0.72;
  double area_mean_km2 = 1.34;
  double area_max_km2 = 18.37;
  double pokepoint_density = 4.0;          // mean PokéPoints per km²
  double pokepoint_density_spread = 0.8;   // lognormal sigma of per-zone intensity
  double zone_day_heterogeneity = 0.045;     // variance of the gamma activity factor per zone, date and block
  int heterogeneity_block_min = 60;        // activity factor is constant over blocks of this many minutes
  double rate_scale = 1.0;                 // multiplies every rate profile
  double home_zone_heterogeneity = 0.0;    // lognormal sigma of persistent zone attractiveness
  std::array<double, 3> home_weight{1.0, 0.2, 0.6};
  std::array<double, 3> work_weight{0.3, 1.5, 1.0};
  // [land use][day group: business, weekend]
  std::array<std::array<RateProfile, 2>, 3> rate_profiles;
  std::vector<EffectSpec> effects;
  bool effect_scales_with_pokepoints = false;
  double daily_mib_median = 40.0;
  StudyCalendar calendar = default_calendar();
  std::optional<Date> launch_date = parse_date("2016-08-03");
  TimeGrid grid;
  int lowess_bandwidth_min = 30;
  std::uint64_t seed = 1;
  double center_lon = -70.65;
  double center_lat = -33.45;

  SynthScenario() {
    using P = RateProfile;
    rate_profiles[0][0] = P{{{360, 0.12}, {480, 0.30}, {600, 0.21}, {780, 0.27}, {1080, 0.33}, {1290, 0.66}, {1439, 0.24}}};
    rate_profiles[0][1] = P{{{360, 0.09}, {600, 0.30}, {780, 0.39}, {1080, 0.39}, {1290, 0.78}, {1439, 0.30}}};
    rate_profiles[1][0] = P{{{360, 0.09}, {540, 0.39}, {750, 0.60}, {900, 0.42}, {1080, 0.33}, {1260, 0.18}, {1439, 0.09}}};
    rate_profiles[1][1] = P{{{360, 0.06}, {660, 0.24}, {900, 0.27}, {1260, 0.30}, {1439, 0.15}}};
    rate_profiles[2][0] = P{{{360, 0.12}, {540, 0.33}, {750, 0.48}, {1080, 0.36}, {1290, 0.48}, {1439, 0.18}}};
    rate_profiles[2][1] = P{{{360, 0.09}, {660, 0.33}, {900, 0.36}, {1290, 0.60}, {1439, 0.24}}};
  }

  void validate() const {
    if (n_zones < 1) throw ConfigError("scenario: n_zones must be positive");
    if (devices < 1) throw ConfigError("scenario: devices must be positive");
    if (towers_per_zone_min < 1 || towers_per_zone_max < towers_per_zone_min)
      throw ConfigError("scenario: towers_per_zone must be a range of positive integers");
    double mix = 0;
    for (double v : land_use_mix) {
      if (v < 0) throw ConfigError("scenario: land_use_mix must be non-negative");
      mix += v;
    }
    if (std::abs(mix - 1.0) > 1e-9) throw ConfigError("scenario: land_use_mix must sum to 1");
    if (!(area_median_km2 > 0) || !(area_mean_km2 > area_median_km2) || !(area_max_km2 > area_median_km2))
      throw ConfigError("scenario: need 0 < area median < area mean and median < max");
    if (heterogeneity_block_min < 1) throw ConfigError("scenario: heterogeneity_block_min must be positive");
    if (!(rate_scale > 0)) throw ConfigError("scenario: rate_scale must be positive");
    if (pokepoint_density < 0 || zone_day_heterogeneity < 0 || home_zone_heterogeneity < 0)
      throw ConfigError("scenario: densities and heterogeneities must be non-negative");
    if (calendar.pre_dates().empty() || calendar.post_dates().empty())
      throw ConfigError("scenario: need pre and post dates");
    grid.validate();
    for (const auto& e : effects) {
      if (!(e.multiplier > 0)) throw ConfigError("scenario: effect multiplier must be positive");
      if (e.start_minute > e.end_minute || !grid.contains(e.start_minute) || !grid.contains(e.end_minute))
        throw ConfigError("scenario: effect window must lie inside the time grid");
    }
    if (!(daily_mib_median > 2.5) || !(daily_mib_median < 500)) throw ConfigError("scenario: daily_mib_median out of (2.5, 500)");
  }
};

inline EffectSpec parse_effect(std::string_view s) {
  const auto parts = detail::split(detail::trim(s), ' ');
  std::vector<std::string_view> f;
  for (auto p : parts)
    if (!detail::trim(p).empty()) f.push_back(detail::trim(p));
  if (f.size() != 3) throw ConfigError("effect needs '<business|weekend> HH:MM-HH:MM multiplier'");
  const auto dash = f[1].find('-');
  if (dash == std::string_view::npos) throw ConfigError("effect window needs HH:MM-HH:MM");
  return {parse_day_group(f[0]), parse_clock(f[1].substr(0, dash)), parse_clock(f[1].substr(dash + 1)),
          parse_real(f[2], "effect multiplier")};
}

inline SynthScenario parse_scenario_text(std::string_view text, std::string_view source = "scenario") {
  SynthScenario s;
  std::optional<std::vector<Date>> pre, post, excluded;
  auto triple = [](std::string_view v, std::string_view what) {
    const auto f = detail::split(v, ',');
    if (f.size() != 3) throw ConfigError(std::string(what) + " needs three comma-separated values");
    return std::array<double, 3>{parse_real(f[0], what), parse_real(f[1], what), parse_real(f[2], what)};
  };
  bool effects_reset = false;
  for (const auto& [key, value] : parse_key_values(text, source)) {
    if (key == "n_zones") s.n_zones = parse_integer(value, key);
    else if (key == "towers_per_zone") {
      const auto dots = value.find("..");
      if (dots == std::string::npos) s.towers_per_zone_min = s.towers_per_zone_max = parse_integer(value, key);
      else {
        s.towers_per_zone_min = parse_integer(std::string_view(value).substr(0, dots), key);
        s.towers_per_zone_max = parse_integer(std::string_view(value).substr(dots + 2), key);
      }
    } else if (key == "devices") s.devices = parse_integer(value, key);
    else if (key == "land_use_mix") s.land_use_mix = triple(value, key);
    else if (key == "home_weight") s.home_weight = triple(value, key);
    else if (key == "work_weight") s.work_weight = triple(value, key);
    else if (key == "area_median_km2") s.area_median_km2 = parse_real(value, key);
    else if (key == "area_mean_km2") s.area_mean_km2 = parse_real(value, key);
    else if (key == "area_max_km2") s.area_max_km2 = parse_real(value, key);
    else if (key == "pokepoint_density") s.pokepoint_density = parse_real(value, key);
    else if (key == "pokepoint_density_spread") s.pokepoint_density_spread = parse_real(value, key);
    else if (key == "zone_day_heterogeneity") s.zone_day_heterogeneity = parse_real(value, key);
    else if (key == "heterogeneity_block_min") s.heterogeneity_block_min = parse_integer(value, key);
    else if (key == "rate_scale") s.rate_scale = parse_real(value, key);
    else if (key == "home_zone_heterogeneity") s.home_zone_heterogeneity = parse_real(value, key);
    else if (key == "effect") {
      if (!effects_reset) s.effects.clear(), effects_reset = true;
      s.effects.push_back(parse_effect(value));
    } else if (key == "effect_scales_with_pokepoints") s.effect_scales_with_pokepoints = value == "true" || value == "1";
    else if (key == "daily_mib_median") s.daily_mib_median = parse_real(value, key);
    else if (key == "seed") s.seed = std::stoull(value);
    else if (key == "launch_date") s.launch_date = parse_date(value);
    else if (key == "pre_dates") pre = parse_date_list(value);
    else if (key == "post_dates") post = parse_date_list(value);
    else if (key == "excluded_dates") excluded = parse_date_list(value);
    else if (key == "grid_start") s.grid.start = parse_clock(value);
    else if (key == "grid_end") s.grid.end = parse_clock(value);
    else if (key == "lowess_bandwidth_min") s.lowess_bandwidth_min = parse_integer(value, key);
    else if (key.rfind("profile.", 0) == 0) {
      // profile.<land_use>.<business|weekend>
      const auto f = detail::split(key, '.');
      const auto lu = f.size() == 3 ? try_parse_land_use(f[1]) : std::nullopt;
      if (!lu) throw ConfigError("bad profile key '" + key + "'");
      s.rate_profiles[static_cast<std::size_t>(*lu)][static_cast<std::size_t>(parse_day_group(f[2]))] =
          parse_rate_profile(value);
    } else throw ConfigError(fmt::format("{}: unknown key '{}'", source, key));
  }
  if (pre || post || excluded || s.launch_date) {
    std::vector<Date> p, q, x;
    if (s.launch_date) {
      for (int i = 7; i >= 1; --i) p.push_back(add_days(*s.launch_date, -i));
      for (int i = 1; i <= 7; ++i) q.push_back(add_days(*s.launch_date, i));
      x.push_back(*s.launch_date);
    }
    s.calendar = StudyCalendar(pre.value_or(p), post.value_or(q), excluded.value_or(x));
  }
  s.validate();
  return s;
}

inline SynthScenario parse_scenario(const std::filesystem::path& path) {
  return parse_scenario_text(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Static part of a synthetic city.
struct SynthWorld {
  std::vector<ZoneRecord> zones;  // pokepoint_count filled from the POIs placed inside
  std::vector<Tower> towers;
  std::vector<GeoPoint> pois;
  std::vector<std::vector<std::size_t>> zone_towers;  // tower indices per zone
  std::vector<double> zone_effect_scale;              // per-zone scale of (multiplier - 1)
  std::vector<std::vector<double>> activity;          // [zone][date index * blocks + block] gamma factor
  std::size_t blocks_per_day = 1;
  int grid_start = 0;
  int block_min = 1440;

  double activity_at(std::size_t zone, std::size_t date_index, int minute) const {
    return activity[zone][date_index * blocks_per_day + static_cast<std::size_t>((minute - grid_start) / block_min)];
  }
};

namespace detail {

inline constexpr double kKmPerDegree = kEarthRadiusKm * std::numbers::pi / 180.0;

struct Square {
  double lon0, lat0, lon1, lat1;
};

inline GeoPoint point_in_square(Engine& rng, const Square& s, double margin = 0.05) {
  const double dx = s.lon1 - s.lon0, dy = s.lat1 - s.lat0;
  return {s.lon0 + dx * uniform(rng, margin, 1 - margin), s.lat0 + dy * uniform(rng, margin, 1 - margin)};
}

}  // namespace detail

/// Zones are squares laid on a rectangular grid of equal cells, one zone
/// per cell, with lognormal areas (median/mean from the scenario, capped
/// below the maximum).
inline SynthWorld build_world(const SynthScenario& sc) {
  Engine rng = substream(sc.seed, 0xC17E);
  SynthWorld w;
  const double mu = std::log(sc.area_median_km2);
  const double sigma = std::sqrt(2.0 * std::log(sc.area_mean_km2 / sc.area_median_km2));
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(sc.n_zones))));
  const double cell_km = std::sqrt(sc.area_max_km2) * 1.15;
  const double lat_step = cell_km / detail::kKmPerDegree;

  std::vector<detail::Square> squares;
  for (int z = 0; z < sc.n_zones; ++z) {
    double area;
    do area = std::exp(mu + sigma * standard_normal(rng));
    while (area >= sc.area_max_km2);
    const int r = z / cols, c = z % cols;
    const double clat = sc.center_lat + (r - cols / 2.0) * lat_step;
    const double km_per_lon = detail::kKmPerDegree * std::cos(clat * std::numbers::pi / 180.0);
    const double clon = sc.center_lon + (c - cols / 2.0) * cell_km / km_per_lon;
    const double half = std::sqrt(area) / 2.0;
    const detail::Square sq{clon - half / km_per_lon, clat - half / detail::kKmPerDegree, clon + half / km_per_lon,
                            clat + half / detail::kKmPerDegree};
    squares.push_back(sq);

    ZoneRecord zone;
    zone.zone_id = fmt::format("Z{:03d}", z);
    zone.polygons.push_back(Polygon{
        {{sq.lon0, sq.lat0}, {sq.lon1, sq.lat0}, {sq.lon1, sq.lat1}, {sq.lon0, sq.lat1}, {sq.lon0, sq.lat0}}, {}});
    zone.area_km2 = spherical_area_km2(zone);
    const double u = uniform01(rng);
    zone.land_use = u < sc.land_use_mix[0]                          ? LandUse::residential
                    : u < sc.land_use_mix[0] + sc.land_use_mix[1] ? LandUse::business_only
                                                                   : LandUse::mixed_activities;
    w.zones.push_back(std::move(zone));
  }

  for (int z = 0; z < sc.n_zones; ++z) {
    const int k = sc.towers_per_zone_min +
                  static_cast<int>(uniform_index(rng, static_cast<std::size_t>(sc.towers_per_zone_max - sc.towers_per_zone_min + 1)));
    w.zone_towers.emplace_back();
    for (int t = 0; t < k; ++t) {
      w.zone_towers.back().push_back(w.towers.size());
      w.towers.push_back({fmt::format("T{:04d}", w.towers.size()), detail::point_in_square(rng, squares[static_cast<std::size_t>(z)])});
    }
  }

  // PokéPoints: at least one per zone, plus a Poisson number with a
  // zone-specific lognormal intensity (mean one).
  const double s2 = sc.pokepoint_density_spread;
  for (int z = 0; z < sc.n_zones; ++z) {
    const double intensity = sc.pokepoint_density * std::exp(s2 * standard_normal(rng) - s2 * s2 / 2.0);
    const int n = 1 + poisson(rng, intensity * w.zones[static_cast<std::size_t>(z)].area_km2);
    for (int i = 0; i < n; ++i) w.pois.push_back(detail::point_in_square(rng, squares[static_cast<std::size_t>(z)]));
    w.zones[static_cast<std::size_t>(z)].pokepoint_count = n;
  }
  // A few POIs on cell corners, outside every zone.
  for (int z = 0; z < sc.n_zones; z += 5) {
    const auto& sq = squares[static_cast<std::size_t>(z)];
    const double gap_lat = (lat_step - (sq.lat1 - sq.lat0)) / 2.0;
    if (gap_lat > 1e-6) w.pois.push_back({sq.lon0, sq.lat0 - gap_lat / 2.0});
  }

  double mean_density = 0;
  for (const auto& z : w.zones) mean_density += z.pokepoint_count / z.area_km2;
  mean_density /= static_cast<double>(w.zones.size());
  for (const auto& z : w.zones)
    w.zone_effect_scale.push_back(sc.effect_scales_with_pokepoints ? (z.pokepoint_count / z.area_km2) / mean_density : 1.0);

  const auto dates = sc.calendar.study_dates();
  w.grid_start = sc.grid.start;
  w.block_min = sc.heterogeneity_block_min;
  w.blocks_per_day = static_cast<std::size_t>((sc.grid.end - sc.grid.start) / w.block_min + 1);
  const double phi = sc.zone_day_heterogeneity;
  for (std::size_t z = 0; z < w.zones.size(); ++z) {
    w.activity.emplace_back();
    for (std::size_t k = 0; k < dates.size() * w.blocks_per_day; ++k)
      w.activity.back().push_back(phi > 0 ? gamma(rng, 1.0 / phi, phi) : 1.0);
  }
  return w;
}

/// Per-(zone, date, minute) effect multiplier.
inline double effect_multiplier(const SynthScenario& sc, const SynthWorld& w, std::size_t zone, Date date, int minute) {
  if (!sc.calendar.is_post(date)) return 1.0;
  const DayGroup group = day_group_of(classify_day(date));
  double m = 1.0;
  for (const auto& e : sc.effects)
    if (e.day_group == group && minute >= e.start_minute && minute <= e.end_minute)
      m *= std::max(0.05, 1.0 + (e.multiplier - 1.0) * w.zone_effect_scale[zone]);
  return m;
}

/// Event rate under which a device is seen in a given minute `m` times as
/// often as under `lambda`, so expected unique-device counts scale by `m`.
inline double boosted_rate(double lambda, double m) {
  if (m == 1.0) return lambda;
  const double seen = -std::expm1(-lambda);
  return -std::log1p(-std::min(m * seen, 0.999));
}

/// Compact event used during generation: date index into the study dates.
struct RawEvent {
  std::uint16_t date_index;
  std::uint16_t minute;
  std::uint32_t tower;
  double kib;
};

/// Home/work anchors and categories of every device.
struct DevicePlan {
  std::size_t home = 0;
  std::size_t work = 0;
  std::string category;
};

inline std::vector<DevicePlan> plan_devices(const SynthScenario& sc, const SynthWorld& w) {
  Engine rng = substream(sc.seed, 0xD3F1CE);
  std::vector<double> home_w, work_w;
  const double hs = sc.home_zone_heterogeneity;
  for (const auto& z : w.zones) {
    const auto lu = static_cast<std::size_t>(z.land_use);
    const double h1 = hs > 0 ? std::exp(hs * standard_normal(rng) - hs * hs / 2) : 1.0;
    const double h2 = hs > 0 ? std::exp(hs * standard_normal(rng) - hs * hs / 2) : 1.0;
    home_w.push_back(z.area_km2 * sc.home_weight[lu] * h1);
    work_w.push_back(z.area_km2 * sc.work_weight[lu] * h2);
  }
  // Systematic sampling over the cumulative weights, so zone populations
  // match their expected shares up to one device; then a random shuffle.
  auto allocate = [&](const std::vector<double>& weights) {
    double total = 0;
    for (double v : weights) total += v;
    std::vector<std::size_t> slots;
    const double u0 = uniform01(rng);
    double cum = 0;
    std::size_t zone = 0;
    for (int d = 0; d < sc.devices; ++d) {
      const double target = (u0 + d) / sc.devices * total;
      while (zone + 1 < weights.size() && cum + weights[zone] <= target) cum += weights[zone++];
      slots.push_back(zone);
    }
    for (std::size_t i = slots.size(); i > 1; --i) std::swap(slots[i - 1], slots[uniform_index(rng, i)]);
    return slots;
  };
  const auto homes = allocate(home_w);
  const auto works = allocate(work_w);
  static const std::array<std::string, 2> kCategories{"prepaid", "contract"};
  std::vector<DevicePlan> plans;
  for (std::size_t d = 0; d < homes.size(); ++d) plans.push_back({homes[d], works[d], kCategories[uniform_index(rng, 2)]});
  return plans;
}

/// One device over every study date: an inhomogeneous Poisson process by
/// thinning, with the rate set by the land use of the zone the device is
/// in, scaled by the zone's activity factor. On business days the device
/// sits in its work zone between a daily arrival and departure time;
/// otherwise it is at home. Effect windows act through boosted_rate.
inline std::vector<RawEvent> simulate_device(const SynthScenario& sc, const SynthWorld& w, const DevicePlan& plan,
                                             std::size_t device_index) {
  Engine rng = substream(sc.seed, 1000 + device_index);
  const auto dates = sc.calendar.study_dates();
  std::vector<RawEvent> events;
  const double t_end = sc.grid.end + 1.0;
  for (std::size_t di = 0; di < dates.size(); ++di) {
    const Date date = dates[di];
    const DayGroup group = day_group_of(classify_day(date));
    const auto g = static_cast<std::size_t>(group);
    const double arrive = 480 + uniform(rng, -60, 60);
    const double leave = 1080 + uniform(rng, -60, 90);
    auto zone_at = [&](double t) {
      return group == DayGroup::business && t >= arrive && t < leave ? plan.work : plan.home;
    };
    // One serving tower per zone for the day.
    const std::size_t home_tower = w.zone_towers[plan.home][uniform_index(rng, w.zone_towers[plan.home].size())];
    const std::size_t work_tower = w.zone_towers[plan.work][uniform_index(rng, w.zone_towers[plan.work].size())];
    auto tower_at = [&](double t) { return zone_at(t) == plan.home ? home_tower : work_tower; };
    auto rate = [&](std::size_t zone, int minute) {
      const auto lu = static_cast<std::size_t>(w.zones[zone].land_use);
      return boosted_rate(sc.rate_scale * sc.rate_profiles[lu][g].at(minute) * w.activity_at(zone, di, minute),
                          effect_multiplier(sc, w, zone, date, minute));
    };
    double bound = 0;
    for (std::size_t zone : {plan.home, plan.work}) {
      const auto lu = static_cast<std::size_t>(w.zones[zone].land_use);
      double peak = 0;
      for (const auto& [_, r] : sc.rate_profiles[lu][g].knots) peak = std::max(peak, r);
      double eff = 1;
      for (const auto& e : sc.effects) eff *= std::max(1.0, 1.0 + (e.multiplier - 1.0) * w.zone_effect_scale[zone]);
      double act = 0;
      for (std::size_t b = 0; b < w.blocks_per_day; ++b) act = std::max(act, w.activity[zone][di * w.blocks_per_day + b]);
      bound = std::max(bound, boosted_rate(sc.rate_scale * peak * act, eff));
    }
    const std::size_t first = events.size();
    if (bound > 0) {
      for (double t = sc.grid.start + exponential(rng, bound); t < t_end; t += exponential(rng, bound)) {
        const int minute = static_cast<int>(t);
        const std::size_t zone = zone_at(t);
        if (uniform01(rng) * bound < rate(zone, minute))
          events.push_back({static_cast<std::uint16_t>(di), static_cast<std::uint16_t>(minute),
                            static_cast<std::uint32_t>(tower_at(t)), 0.0});
      }
    }
    if (events.size() == first) {
      // Every device is active every study day by construction.
      const int minute = sc.grid.start + static_cast<int>(uniform_index(rng, sc.grid.size()));
      events.push_back({static_cast<std::uint16_t>(di), static_cast<std::uint16_t>(minute),
                        static_cast<std::uint32_t>(tower_at(minute)), 0.0});
    }
    // Daily traffic drawn inside (2.5, 500) MiB, split across the events.
    const double mib = std::clamp(sc.daily_mib_median * std::exp(0.8 * standard_normal(rng)), 3.0, 450.0);
    double total_w = 0;
    for (std::size_t i = first; i < events.size(); ++i) total_w += (events[i].kib = exponential(rng, 1.0));
    for (std::size_t i = first; i < events.size(); ++i)
      events[i].kib = std::round(events[i].kib / total_w * mib * 1024.0 * 1000.0) / 1000.0;
  }
  return events;
}

/// Generates the whole dataset; events are delivered to `sink` as
/// NetworkEvent in device order, then date and time order.
template <class Sink>
SynthWorld generate(const SynthScenario& sc, Sink&& sink, unsigned jobs = 1) {
  sc.validate();
  SynthWorld w = build_world(sc);
  const auto plans = plan_devices(sc, w);
  const auto dates = sc.calendar.study_dates();
  constexpr std::size_t kBlock = 256;
  NetworkEvent ev;
  std::vector<std::vector<RawEvent>> block(kBlock);
  for (std::size_t base = 0; base < plans.size(); base += kBlock) {
    const std::size_t n = std::min(kBlock, plans.size() - base);
    parallel_for(n, jobs, [&](std::size_t i) { block[i] = simulate_device(sc, w, plans[base + i], base + i); });
    for (std::size_t i = 0; i < n; ++i) {
      ev.device_id = fmt::format("dev{:06d}", base + i);
      ev.category = plans[base + i].category;
      for (const auto& r : block[i]) {
        ev.date = dates[r.date_index];
        ev.minute = r.minute;
        ev.tower_id = w.towers[r.tower].tower_id;
        ev.kib = r.kib;
        sink(static_cast<const NetworkEvent&>(ev));
      }
    }
  }
  return w;
}

inline std::string format_scenario_config(const SynthScenario& sc) {
  std::string out = "# study configuration written by the synthetic generator\n";
  out += "events = events.csv\ntowers = towers.csv\nzones = zones.geojson\npois = pois.csv\n";
  if (sc.launch_date) out += "launch_date = " + format_date(*sc.launch_date) + "\n";
  auto list = [](const std::vector<Date>& v) {
    std::string s;
    for (const auto& d : v) s += (s.empty() ? "" : ",") + format_date(d);
    return s;
  };
  out += "pre_dates = " + list(sc.calendar.pre_dates()) + "\n";
  out += "post_dates = " + list(sc.calendar.post_dates()) + "\n";
  out += "excluded_dates = " + list(sc.calendar.excluded_dates()) + "\n";
  out += "grid_start = " + format_clock(sc.grid.start) + "\n";
  out += "grid_end = " + format_clock(sc.grid.end) + "\n";
  out += "max_zone_area_km2 = 20\n";
  out += fmt::format("lowess_bandwidth_min = {}\n", sc.lowess_bandwidth_min);
  out += "category_allowlist = *\n";
  return out;
}

/// Writes events.csv, towers.csv, zones.geojson, pois.csv and study.cfg.
inline SynthWorld write_dataset(const SynthScenario& sc, const std::filesystem::path& dir, unsigned jobs = 1) {
  std::filesystem::create_directories(dir);
  auto events_tmp = dir / "events.csv.tmp";
  SynthWorld w;
  {
    std::ofstream out(events_tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + events_tmp.string());
    out << kEventsHeader << '\n';
    std::string line;
    w = generate(
        sc,
        [&](const NetworkEvent& e) {
          line = fmt::format("{}T{},{},{},{:.3f},{}\n", format_date(e.date), format_clock(e.minute), e.device_id,
                             e.tower_id, e.kib, e.category);
          out.write(line.data(), static_cast<std::streamsize>(line.size()));
        },
        jobs);
  }
  std::filesystem::rename(events_tmp, dir / "events.csv");

  std::string towers = "tower_id,lon,lat\n";
  for (const auto& t : w.towers) towers += t.tower_id + "," + fmt_real(t.location.lon) + "," + fmt_real(t.location.lat) + "\n";
  write_file_atomic(dir / "towers.csv", towers);
  std::string pois = "lon,lat,kind\n";
  for (std::size_t i = 0; i < w.pois.size(); ++i)
    pois += fmt_real(w.pois[i].lon) + "," + fmt_real(w.pois[i].lat) + "," + (i % 4 == 0 ? "gym" : "stop") + "\n";
  write_file_atomic(dir / "pois.csv", pois);
  write_file_atomic(dir / "zones.geojson", zones_to_geojson(w.zones).dump(1) + "\n");
  write_file_atomic(dir / "study.cfg", format_scenario_config(sc));
  return w;
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

struct GroundTruth {
  TimeGrid grid;
  int edge_tolerance = 15;  // ± half the smoothing bandwidth
  std::map<DayGroup, std::vector<double>> irr;  // per grid minute
  std::vector<EffectSpec> windows;

  /// True when `minute` lies within the edge tolerance of a window boundary.
  bool near_edge(DayGroup g, int minute) const {
    for (const auto& w : windows)
      if (w.day_group == g && (std::abs(minute - w.start_minute) <= edge_tolerance ||
                               std::abs(minute - w.end_minute) <= edge_tolerance))
        return true;
    return false;
  }
};

/// Expected IRR per day group: the product of the multipliers of the
/// windows covering each minute, 1 elsewhere.
inline GroundTruth ground_truth(const SynthScenario& sc) {
  GroundTruth gt;
  gt.grid = sc.grid;
  gt.edge_tolerance = sc.lowess_bandwidth_min / 2;
  gt.windows = sc.effects;
  for (DayGroup g : {DayGroup::business, DayGroup::weekend}) {
    std::vector<double> v(sc.grid.size(), 1.0);
    for (std::size_t m = 0; m < v.size(); ++m) {
      const int minute = sc.grid.minute_at(m);
      for (const auto& e : sc.effects)
        if (e.day_group == g && minute >= e.start_minute && minute <= e.end_minute) v[m] *= e.multiplier;
    }
    gt.irr[g] = std::move(v);
  }
  return gt;
}

}  // namespace floatpop::synth
