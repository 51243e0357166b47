#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "floatpop/aggregation.hpp"
#include "floatpop/device_filter.hpp"
#include "floatpop/experiment.hpp"
#include "floatpop/geojson.hpp"
#include "floatpop/ingest.hpp"
#include "floatpop/smoothing.hpp"

namespace floatpop {

/// Static inputs of a study after zone selection.
struct StudyInputs {
  std::vector<ZoneRecord> zones;  // selected, sorted by zone_id
  std::vector<Tower> towers;
  TowerAssignment assignment;     // towers inside selected zones
  std::size_t zones_in_file = 0;
  std::vector<std::string> warnings;
};

inline StudyInputs prepare_inputs(std::vector<ZoneRecord> all_zones, std::vector<Tower> towers,
                                  std::span<const GeoPoint> pois, double max_area_km2) {
  validate_non_overlapping(all_zones);
  StudyInputs in;
  in.zones_in_file = all_zones.size();
  all_zones = attach_pokepoints(std::move(all_zones), pois);
  in.zones = select_zones(all_zones, towers, max_area_km2);
  if (in.zones.empty()) throw InputError("no zone has a tower and a PokéPoint under the area cap");
  in.assignment = assign_towers(towers, in.zones);
  in.towers = std::move(towers);
  return in;
}

inline StudyInputs load_inputs(const StudyConfig& cfg) {
  ZoneLoadReport report;
  auto zones = parse_zones(cfg.zones_path, &report);
  auto towers = parse_towers(cfg.towers_path);
  const auto pois = parse_pois(cfg.pois_path);
  auto in = prepare_inputs(std::move(zones), std::move(towers), pois, cfg.max_zone_area_km2);
  in.warnings.insert(in.warnings.begin(), report.warnings.begin(), report.warnings.end());
  return in;
}

/// Streaming consumer of raw events. Applies rule (i), keeps per
/// device-day traffic for rules (ii)-(iv) and a compact record of every
/// surviving event for the unique-device counts.
class EventCollector {
 public:
  EventCollector(const TowerAssignment& assignment, TimeGrid grid, const StudyCalendar& calendar)
      : grid_(grid), dates_(calendar.study_dates()) {
    for (const auto& [tower, _] : assignment) {
      tower_index_.emplace(tower, static_cast<std::uint32_t>(tower_ids_.size()));
      tower_ids_.push_back(tower);
    }
  }

  void operator()(const NetworkEvent& e) {
    ++seen_;
    if (!grid_.contains(e.minute)) return;
    const auto t = tower_index_.find(e.tower_id);
    if (t == tower_index_.end()) return;
    const auto d = std::lower_bound(dates_.begin(), dates_.end(), e.date);
    if (d == dates_.end() || !(*d == e.date)) return;
    const auto di = static_cast<std::size_t>(d - dates_.begin());

    auto [dev, inserted] = device_index_.try_emplace(e.device_id, static_cast<std::uint32_t>(device_ids_.size()));
    if (inserted) {
      device_ids_.push_back(e.device_id);
      days_.resize(days_.size() + dates_.size());
    }
    auto [cat, new_cat] = category_index_.try_emplace(e.category, static_cast<unsigned>(categories_.size()));
    if (new_cat) {
      if (categories_.size() == 64) throw InputError("more than 64 distinct service categories");
      categories_.push_back(e.category);
    }
    auto& day = days_[dev->second * dates_.size() + di];
    ++day.events;
    day.kib += e.kib;
    day.categories |= std::uint64_t{1} << cat->second;
    keys_.push_back({dev->second, t->second, static_cast<std::uint16_t>(di),
                     static_cast<std::uint16_t>(*grid_.index_of(e.minute))});
  }

  std::size_t events_seen() const { return seen_; }
  std::size_t events_kept() const { return keys_.size(); }

  /// Daily statistics over grid-filtered events, sorted by (device, date).
  /// Study dates without events are omitted.
  std::vector<DeviceDayStats> day_stats() const {
    std::vector<std::uint32_t> order(device_ids_.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return device_ids_[a] < device_ids_[b]; });
    std::vector<DeviceDayStats> out;
    for (auto dev : order)
      for (std::size_t d = 0; d < dates_.size(); ++d) {
        const auto& t = days_[dev * dates_.size() + d];
        if (t.events == 0) continue;
        DeviceDayStats s{device_ids_[dev], dates_[d], t.events, t.kib / kKibPerMib, true, {}};
        for (unsigned c = 0; c < categories_.size(); ++c)
          if (t.categories >> c & 1U) s.categories.push_back(categories_[c]);
        std::sort(s.categories.begin(), s.categories.end());
        out.push_back(std::move(s));
      }
    return out;
  }

  /// Unique kept devices per (tower, date, minute); one series for every
  /// assigned tower and study date, ordered by tower_id then date.
  std::vector<RawTowerSeries> tower_counts(const std::set<std::string>& kept_devices) {
    std::vector<char> keep(device_ids_.size(), 0);
    for (std::size_t i = 0; i < device_ids_.size(); ++i) keep[i] = kept_devices.count(device_ids_[i]) ? 1 : 0;
    std::sort(keys_.begin(), keys_.end());
    keys_.erase(std::unique(keys_.begin(), keys_.end()), keys_.end());

    std::vector<RawTowerSeries> out;
    out.reserve(tower_ids_.size() * dates_.size());
    for (std::size_t t = 0; t < tower_ids_.size(); ++t)
      for (const auto& date : dates_) out.push_back({tower_ids_[t], date, std::vector<int>(grid_.size(), 0)});
    for (const auto& k : keys_)
      if (keep[k.device]) ++out[k.tower * dates_.size() + k.date].counts[k.minute];
    return out;  // tower_ids_ come from an ordered map, so already sorted
  }

 private:
  struct Key {
    std::uint32_t device;
    std::uint32_t tower;
    std::uint16_t date;
    std::uint16_t minute;
    auto operator<=>(const Key& o) const {
      return std::tie(tower, date, minute, device) <=> std::tie(o.tower, o.date, o.minute, o.device);
    }
    bool operator==(const Key&) const = default;
  };
  struct DayTally {
    std::size_t events = 0;
    double kib = 0.0;
    std::uint64_t categories = 0;
  };

  TimeGrid grid_;
  std::vector<Date> dates_;
  std::unordered_map<std::string, std::uint32_t> tower_index_;
  std::vector<std::string> tower_ids_;
  std::unordered_map<std::string, std::uint32_t> device_index_;
  std::vector<std::string> device_ids_;
  std::unordered_map<std::string, unsigned> category_index_;
  std::vector<std::string> categories_;
  std::vector<DayTally> days_;
  std::vector<Key> keys_;
  std::size_t seen_ = 0;
};

struct IngestResult {
  std::vector<RawTowerSeries> tower_counts;
  DeviceFilterReport filter;
  RejectionReport rejections;
  std::size_t events_seen = 0;
  std::size_t events_in_grid = 0;
};

inline IngestResult finish_ingest(EventCollector& collector, const StudyConfig& cfg) {
  IngestResult r;
  r.events_seen = collector.events_seen();
  r.events_in_grid = collector.events_kept();
  const auto stats = collector.day_stats();
  auto sel = select_devices(stats, cfg.calendar, cfg.min_mib, cfg.max_mib, cfg.category_allowlist);
  r.filter = sel.report;
  r.tower_counts = collector.tower_counts(sel.kept);
  return r;
}

/// Reads the events file named in `cfg` and applies the device filter.
inline IngestResult ingest_events(const StudyConfig& cfg, const StudyInputs& inputs) {
  EventCollector collector(inputs.assignment, cfg.grid, cfg.calendar);
  const auto rejections = parse_events(cfg.events_path, collector);
  auto r = finish_ingest(collector, cfg);
  r.rejections = rejections;
  return r;
}

/// LOWESS on every tower series, then per-zone sums for every study date.
inline ProfileTable build_profiles(std::span<const RawTowerSeries> tower_counts, const StudyInputs& inputs,
                                   const StudyConfig& cfg, unsigned jobs = 1) {
  std::vector<SmoothedSeries> smoothed(tower_counts.size());
  parallel_for(tower_counts.size(), jobs, [&](std::size_t i) {
    smoothed[i] = lowess_smooth(tower_counts[i], cfg.lowess_bandwidth_min, cfg.grid.step);
  });
  std::vector<std::string> ids;
  for (const auto& z : inputs.zones) ids.push_back(z.zone_id);
  const auto dates = cfg.calendar.study_dates();
  ProfileTable table(cfg.grid, ids, dates);
  for (const auto& date : dates)
    for (const auto& p : aggregate_zone(smoothed, inputs.assignment, inputs.zones, date, cfg.grid.size()))
      table.set_profile(p);
  return table;
}

// ---------------------------------------------------------------------------
// Analysis
// ---------------------------------------------------------------------------

struct ScopeResult {
  std::string day_group;  // "all", "business" or "weekend"
  SweepResult sweep;
  std::vector<EffectWindow> windows;  // pogo
};

struct CorrelationRow {
  std::string day_group;
  EffectWindow window;
  std::optional<CorrelationResult> result;  // empty when degenerate
};

struct AnalysisResult {
  std::vector<ScopeResult> scopes;
  std::vector<CorrelationRow> correlations;
  std::vector<std::pair<std::string, json>> choropleths;  // file name, document
  std::vector<std::string> warnings;
};

inline bool group_has_both_sides(const StudyCalendar& calendar, DayGroup g) {
  auto in = [&](const std::vector<Date>& v) {
    return std::any_of(v.begin(), v.end(), [&](Date d) { return day_group_of(classify_day(d)) == g; });
  };
  return in(calendar.pre_dates()) && in(calendar.post_dates());
}

/// Sweeps each scope (every study date, then each day group unless the
/// config pins one), extracts pogo windows and runs the spatial
/// post-analysis per day group.
inline AnalysisResult analyze(const ProfileTable& table, std::span<const ZoneRecord> zones,
                              const StudyCalendar& calendar, const ModelConfig& config, unsigned jobs = 1) {
  AnalysisResult out;
  std::vector<std::optional<DayGroup>> scopes;
  if (config.day_group) scopes.push_back(config.day_group);
  else scopes = {std::nullopt, DayGroup::business, DayGroup::weekend};

  for (const auto& scope : scopes) {
    if (scope && !group_has_both_sides(calendar, *scope)) {
      out.warnings.push_back(fmt::format("day group '{}' lacks pre or post dates; skipped", to_string(*scope)));
      continue;
    }
    ModelConfig mc = config;
    mc.day_group = scope;
    ScopeResult s;
    s.day_group = scope ? std::string(to_string(*scope)) : "all";
    s.sweep = run_sweep(table, zones, calendar, mc, jobs);
    s.windows = extract_windows(s.sweep.fits, kPogo, config.sig_level);
    if (s.sweep.nonconvergence_warning)
      out.warnings.push_back(fmt::format("{}: {} of {} minutes did not converge", s.day_group, s.sweep.nonconverged,
                                         s.sweep.fits.size()));
    out.scopes.push_back(std::move(s));
  }

  for (const auto& s : out.scopes) {
    if (s.day_group == "all") continue;
    const DayGroup g = parse_day_group(s.day_group);
    const auto diffs = zone_differences(table, zones, calendar, g);
    for (const auto& w : s.windows) {
      CorrelationRow row{s.day_group, w, std::nullopt};
      try {
        row.result = pokepoint_correlation(differences_at(diffs, w.minute_of_max), zones);
      } catch (const Error& e) {
        out.warnings.push_back(fmt::format("correlation at {} ({}): {}", format_clock(w.minute_of_max), s.day_group,
                                           e.what()));
      }
      out.correlations.push_back(std::move(row));
    }
    for (const auto& w : longest_windows(s.windows, 2)) {
      const int m = w.minute_of_max;
      out.choropleths.emplace_back(fmt::format("choropleth_{}_{:02d}{:02d}.geojson", s.day_group, m / 60, m % 60),
                                   export_choropleth(differences_at(diffs, m), zones));
    }
  }
  return out;
}

inline std::string format_correlations_csv(std::span<const CorrelationRow> rows) {
  std::string out = "day_group,start,end,minute_of_max,max_irr,r,p,n\n";
  for (const auto& c : rows) {
    out += fmt::format("{},{},{},{},{},", c.day_group, format_clock(c.window.start_minute),
                       format_clock(c.window.end_minute), format_clock(c.window.minute_of_max),
                       fmt_real(c.window.max_irr));
    out += c.result ? fmt::format("{},{},{}\n", fmt_real(c.result->r), fmt_real(c.result->p), c.result->n)
                    : std::string("nan,nan,0\n");
  }
  return out;
}

/// Output files of an analysis, keyed by file name.
inline std::map<std::string, std::string> render_outputs(const AnalysisResult& a, double sig_level) {
  std::map<std::string, std::string> files;
  std::string fits, windows, series;
  for (std::size_t i = 0; i < a.scopes.size(); ++i) {
    const auto& s = a.scopes[i];
    const bool header = i == 0;
    fits += format_fits_csv(s.sweep.fits, sig_level, s.day_group, header);
    windows += format_windows_csv(s.windows, s.day_group, header);
    std::vector<std::string> factors;
    if (!s.sweep.fits.empty())
      for (const auto& name : s.sweep.fits.front().names)
        if (name != kIntercept) factors.push_back(name);
    series += format_irr_series_csv(irr_timeseries_report(s.sweep.fits, factors, sig_level), s.day_group, header);
  }
  files["fits.csv"] = fits;
  files["windows.csv"] = windows;
  files["irr_series.csv"] = series;
  files["correlations.csv"] = format_correlations_csv(a.correlations);
  for (const auto& [name, doc] : a.choropleths) files[name] = doc.dump(1) + "\n";
  return files;
}

}  // namespace floatpop
