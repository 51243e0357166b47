#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "floatpop/aggregation.hpp"
#include "floatpop/error.hpp"
#include "floatpop/types.hpp"

namespace floatpop {

inline constexpr double kKibPerMib = 1024.0;

/// Rule (i): keep events at towers inside a selected zone and inside the
/// daily time grid.
class SpatioTemporalFilter {
 public:
  SpatioTemporalFilter(const TowerAssignment& assignment, TimeGrid grid)
      : grid_(grid) {
    for (const auto& [tower, _] : assignment) towers_.insert(tower);
  }
  SpatioTemporalFilter(std::span<const ZoneRecord> zones, std::span<const Tower> towers, TimeGrid grid)
      : SpatioTemporalFilter(assign_towers(towers, zones), grid) {}

  bool operator()(const NetworkEvent& e) const {
    return grid_.contains(e.minute) && towers_.count(e.tower_id) > 0;
  }

 private:
  TimeGrid grid_;
  std::unordered_set<std::string> towers_;
};

inline std::vector<NetworkEvent> filter_events_spatiotemporal(std::span<const NetworkEvent> events,
                                                              std::span<const ZoneRecord> zones,
                                                              std::span<const Tower> towers,
                                                              const TimeGrid& grid) {
  const SpatioTemporalFilter keep(zones, towers, grid);
  std::vector<NetworkEvent> out;
  std::copy_if(events.begin(), events.end(), std::back_inserter(out), std::cref(keep));
  return out;
}

struct DeviceDayStats {
  std::string device_id;
  Date date{};
  std::size_t event_count = 0;
  double total_mib = 0.0;
  bool active = false;
  std::vector<std::string> categories;  // sorted, distinct categories seen that day
};

/// Per (device, date) event counts and traffic. `merge` is associative and
/// commutative, so shards may be accumulated independently.
class DayStatsAccumulator {
 public:
  void add(const NetworkEvent& e) { add(e.device_id, e.date, 1, e.kib, e.category); }

  void merge(const DayStatsAccumulator& other) {
    for (const auto& dev : other.devices_)
      for (const auto& day : dev.days)
        for (const auto& c : day.categories) add(dev.device_id, day.date, 0, 0.0, c);
    for (const auto& dev : other.devices_)
      for (const auto& day : dev.days) {
        auto& mine = tally(dev.device_id, day.date);
        mine.events += day.events;
        mine.kib += day.kib;
      }
  }

  std::size_t device_count() const { return devices_.size(); }

  /// Sorted by (device_id, date).
  std::vector<DeviceDayStats> stats() const {
    std::vector<DeviceDayStats> out;
    for (const auto& dev : devices_)
      for (const auto& day : dev.days) {
        auto cats = day.categories;
        std::sort(cats.begin(), cats.end());
        out.push_back({dev.device_id, day.date, day.events, day.kib / kKibPerMib, day.events > 0, cats});
      }
    std::sort(out.begin(), out.end(), [](const DeviceDayStats& a, const DeviceDayStats& b) {
      return a.device_id != b.device_id ? a.device_id < b.device_id : a.date < b.date;
    });
    return out;
  }

 private:
  struct DayTally {
    Date date{};
    std::size_t events = 0;
    double kib = 0.0;
    std::vector<std::string> categories;
  };
  struct DeviceTally {
    std::string device_id;
    std::vector<DayTally> days;
  };

  DayTally& tally(const std::string& device, Date date) {
    auto [it, inserted] = index_.try_emplace(device, devices_.size());
    if (inserted) devices_.push_back({device, {}});
    auto& days = devices_[it->second].days;
    for (auto& d : days)
      if (d.date == date) return d;
    days.push_back({date, 0, 0.0, {}});
    return days.back();
  }

  void add(const std::string& device, Date date, std::size_t events, double kib, const std::string& category) {
    auto& t = tally(device, date);
    t.events += events;
    t.kib += kib;
    if (std::find(t.categories.begin(), t.categories.end(), category) == t.categories.end())
      t.categories.push_back(category);
  }

  std::unordered_map<std::string, std::size_t> index_;
  std::vector<DeviceTally> devices_;
};

inline constexpr std::string_view kRuleActiveEveryDay = "ii_active_every_day";
inline constexpr std::string_view kRuleTrafficBounds = "iii_daily_traffic_bounds";
inline constexpr std::string_view kRuleCategory = "iv_service_category";

struct DeviceFilterReport {
  std::size_t input_devices = 0;
  std::size_t kept_devices = 0;
  std::map<std::string, std::size_t> dropped_by_rule{{std::string(kRuleActiveEveryDay), 0},
                                                     {std::string(kRuleTrafficBounds), 0},
                                                     {std::string(kRuleCategory), 0}};
  double min_mib = 2.5;
  double max_mib = 500.0;
};

struct DeviceSelection {
  std::set<std::string> kept;
  DeviceFilterReport report;
};

/// Rules (ii)-(iv) on grid-filtered daily statistics. A dropped device is
/// attributed to the first failing rule in the order (ii), (iii), (iv).
inline DeviceSelection select_devices(std::span<const DeviceDayStats> day_stats, const StudyCalendar& calendar,
                                      double min_mib = 2.5, double max_mib = 500.0,
                                      std::span<const std::string> allowlist = {}) {
  if (calendar.empty()) throw ConfigError("study calendar has no dates");
  const auto study = calendar.study_dates();
  const std::set<std::string> allowed(allowlist.begin(), allowlist.end());

  std::map<std::string, std::vector<const DeviceDayStats*>> by_device;
  for (const auto& s : day_stats) by_device[s.device_id].push_back(&s);

  DeviceSelection sel;
  sel.report.min_mib = min_mib;
  sel.report.max_mib = max_mib;
  sel.report.input_devices = by_device.size();
  for (const auto& [device, days] : by_device) {
    bool every_day = true, traffic_ok = true, category_ok = true;
    for (const auto& d : study) {
      auto it = std::find_if(days.begin(), days.end(), [&](const DeviceDayStats* s) { return s->date == d; });
      if (it == days.end() || (*it)->event_count == 0) {
        every_day = false;
        continue;
      }
      const double mib = (*it)->total_mib;
      if (!(mib > min_mib && mib < max_mib)) traffic_ok = false;
    }
    if (!allowed.empty())
      for (const auto* s : days)
        for (const auto& c : s->categories)
          if (!allowed.count(c)) category_ok = false;

    if (!every_day) ++sel.report.dropped_by_rule[std::string(kRuleActiveEveryDay)];
    else if (!traffic_ok) ++sel.report.dropped_by_rule[std::string(kRuleTrafficBounds)];
    else if (!category_ok) ++sel.report.dropped_by_rule[std::string(kRuleCategory)];
    else sel.kept.insert(device);
  }
  sel.report.kept_devices = sel.kept.size();
  return sel;
}

inline std::string format_filter_report_csv(const DeviceFilterReport& r) {
  std::string out = "rule,count\n";
  out += fmt::format("input_devices,{}\n", r.input_devices);
  for (const auto& [rule, n] : r.dropped_by_rule) out += fmt::format("{},{}\n", rule, n);
  out += fmt::format("kept_devices,{}\n", r.kept_devices);
  return out;
}

inline std::string format_filter_report_summary(const DeviceFilterReport& r) {
  std::string out;
  out += "# daily MiB totals computed over grid-filtered events only\n";
  out += fmt::format("traffic bounds: {} < MiB/day < {} (strict)\n", r.min_mib, r.max_mib);
  out += fmt::format("input devices: {}\n", r.input_devices);
  out += fmt::format("dropped (ii) not active every study day: {}\n",
                     r.dropped_by_rule.at(std::string(kRuleActiveEveryDay)));
  out += fmt::format("dropped (iii) daily traffic out of bounds: {}\n",
                     r.dropped_by_rule.at(std::string(kRuleTrafficBounds)));
  out += fmt::format("dropped (iv) service category not allowed: {}\n",
                     r.dropped_by_rule.at(std::string(kRuleCategory)));
  out += fmt::format("kept devices: {}\n", r.kept_devices);
  return out;
}

}  // namespace floatpop
