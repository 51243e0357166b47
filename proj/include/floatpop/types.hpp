#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "floatpop/error.hpp"

namespace floatpop {

using Date = std::chrono::year_month_day;

inline constexpr int kMinutesPerDay = 1440;

namespace detail {

inline bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace detail

inline double parse_real(std::string_view s, std::string_view what) {
  s = detail::trim(s);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError(fmt::format("{}: '{}' is not a number", what, s));
  return v;
}

inline int parse_integer(std::string_view s, std::string_view what) {
  int v = 0;
  if (!detail::parse_int(detail::trim(s), v))
    throw ConfigError(fmt::format("{}: '{}' is not an integer", what, s));
  return v;
}


/// Parses `YYYY-MM-DD`; returns nullopt for anything that is not a valid
/// Gregorian date.
inline std::optional<Date> try_parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  int y = 0, m = 0, d = 0;
  if (!detail::parse_int(s.substr(0, 4), y) || !detail::parse_int(s.substr(5, 2), m) ||
      !detail::parse_int(s.substr(8, 2), d))
    return std::nullopt;
  Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
            std::chrono::day{static_cast<unsigned>(d)}};
  if (!date.ok()) return std::nullopt;
  return date;
}

inline Date parse_date(std::string_view s) {
  auto d = try_parse_date(s);
  if (!d) throw InputError("invalid date '" + std::string(s) + "'");
  return *d;
}

inline std::string format_date(Date d) {
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(d.year()),
                     static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
}

inline Date add_days(Date d, int n) {
  return Date{std::chrono::sys_days{d} + std::chrono::days{n}};
}

/// `HH:MM` to minute-of-day.
inline std::optional<int> try_parse_clock(std::string_view s) {
  auto colon = s.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  int h = 0, m = 0;
  if (!detail::parse_int(s.substr(0, colon), h) || !detail::parse_int(s.substr(colon + 1), m))
    return std::nullopt;
  if (h < 0 || h > 23 || m < 0 || m > 59 || s.size() - colon - 1 != 2) return std::nullopt;
  return h * 60 + m;
}

inline int parse_clock(std::string_view s) {
  auto m = try_parse_clock(s);
  if (!m) throw InputError("invalid clock time '" + std::string(s) + "' (expected HH:MM)");
  return *m;
}

inline std::string format_clock(int minute) {
  return fmt::format("{:02d}:{:02d}", minute / 60, minute % 60);
}

enum class DayClass { business_day, saturday, sunday };
enum class DayGroup { business, weekend };
enum class LandUse { residential, business_only, mixed_activities };

inline DayClass classify_day(Date d) {
  const std::chrono::weekday wd{std::chrono::sys_days{d}};
  if (wd == std::chrono::Saturday) return DayClass::saturday;
  if (wd == std::chrono::Sunday) return DayClass::sunday;
  return DayClass::business_day;
}

inline DayGroup day_group_of(DayClass c) {
  return c == DayClass::business_day ? DayGroup::business : DayGroup::weekend;
}

inline std::string_view to_string(DayClass c) {
  switch (c) {
    case DayClass::business_day: return "business_day";
    case DayClass::saturday: return "saturday";
    case DayClass::sunday: return "sunday";
  }
  return "?";
}

inline std::string_view to_string(DayGroup g) {
  return g == DayGroup::business ? "business" : "weekend";
}

inline DayGroup parse_day_group(std::string_view s) {
  if (s == "business") return DayGroup::business;
  if (s == "weekend") return DayGroup::weekend;
  throw InputError("unknown day group '" + std::string(s) + "'");
}

inline std::string_view to_string(LandUse u) {
  switch (u) {
    case LandUse::residential: return "residential";
    case LandUse::business_only: return "business_only";
    case LandUse::mixed_activities: return "mixed_activities";
  }
  return "?";
}

inline std::optional<LandUse> try_parse_land_use(std::string_view s) {
  if (s == "residential") return LandUse::residential;
  if (s == "business_only") return LandUse::business_only;
  if (s == "mixed_activities") return LandUse::mixed_activities;
  return std::nullopt;
}

/// One data-type network event: a device seen at a tower in a given minute.
struct NetworkEvent {
  Date date{};
  int minute = 0;  // minute of day, 0..1439
  std::string device_id;
  std::string tower_id;
  double kib = 0.0;  // KiB downloaded since the previous event
  std::string category;
};

struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// Closed ring: front() == back().
using Ring = std::vector<GeoPoint>;

struct Polygon {
  Ring outer;
  std::vector<Ring> holes;
};

struct Tower {
  std::string tower_id;
  GeoPoint location;
};

struct ZoneRecord {
  std::string zone_id;
  std::vector<Polygon> polygons;  // one entry for Polygon, several for MultiPolygon
  LandUse land_use = LandUse::residential;
  double area_km2 = 0.0;
  int pokepoint_count = 0;
};

/// Inclusive minute-of-day range sampled every `step` minutes.
struct TimeGrid {
  int start = 360;
  int end = 1439;
  int step = 1;

  std::size_t size() const { return static_cast<std::size_t>((end - start) / step + 1); }
  int minute_at(std::size_t i) const { return start + static_cast<int>(i) * step; }
  bool contains(int minute) const {
    return minute >= start && minute <= end && (minute - start) % step == 0;
  }
  std::optional<std::size_t> index_of(int minute) const {
    if (!contains(minute)) return std::nullopt;
    return static_cast<std::size_t>((minute - start) / step);
  }
  void validate() const {
    if (start < 0 || end >= kMinutesPerDay || start >= end || step < 1)
      throw ConfigError(fmt::format("invalid time grid [{}, {}] step {}", start, end, step));
  }
};

/// Pre/post study dates around the intervention.
class StudyCalendar {
 public:
  StudyCalendar() = default;
  StudyCalendar(std::vector<Date> pre, std::vector<Date> post, std::vector<Date> excluded)
      : pre_(std::move(pre)), post_(std::move(post)), excluded_(std::move(excluded)) {
    std::sort(pre_.begin(), pre_.end());
    std::sort(post_.begin(), post_.end());
    std::sort(excluded_.begin(), excluded_.end());
    validate();
  }

  const std::vector<Date>& pre_dates() const { return pre_; }
  const std::vector<Date>& post_dates() const { return post_; }
  const std::vector<Date>& excluded_dates() const { return excluded_; }

  /// Sorted union of pre and post dates.
  std::vector<Date> study_dates() const {
    std::vector<Date> all = pre_;
    all.insert(all.end(), post_.begin(), post_.end());
    std::sort(all.begin(), all.end());
    return all;
  }

  bool empty() const { return pre_.empty() && post_.empty(); }
  bool is_post(Date d) const { return std::binary_search(post_.begin(), post_.end(), d); }
  bool is_study_date(Date d) const {
    return std::binary_search(pre_.begin(), pre_.end(), d) || is_post(d);
  }
  DayClass day_class(Date d) const { return classify_day(d); }

 private:
  void validate() const {
    auto has_duplicates = [](const std::vector<Date>& v) {
      return std::adjacent_find(v.begin(), v.end()) != v.end();
    };
    if (has_duplicates(pre_) || has_duplicates(post_))
      throw ConfigError("study calendar lists a date twice");
    for (const auto& d : pre_)
      if (std::binary_search(post_.begin(), post_.end(), d))
        throw ConfigError("date " + format_date(d) + " is both pre and post");
    for (const auto& d : excluded_)
      if (std::binary_search(pre_.begin(), pre_.end(), d) ||
          std::binary_search(post_.begin(), post_.end(), d))
        throw ConfigError("excluded date " + format_date(d) + " is also a study date");
  }

  std::vector<Date> pre_;
  std::vector<Date> post_;
  std::vector<Date> excluded_;
};

/// A week on either side of 2016-08-03; the launch day itself is
/// excluded.
inline StudyCalendar default_calendar() {
  const Date launch = parse_date("2016-08-03");
  std::vector<Date> pre, post;
  for (int i = 7; i >= 1; --i) pre.push_back(add_days(launch, -i));
  for (int i = 1; i <= 7; ++i) post.push_back(add_days(launch, i));
  return StudyCalendar(pre, post, {launch});
}

}  // namespace floatpop
