#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "floatpop/error.hpp"
#include "floatpop/io.hpp"
#include "floatpop/types.hpp"

namespace floatpop {

/// Unique-device counts per grid minute for one tower and date.
struct RawTowerSeries {
  std::string tower_id;
  Date date{};
  std::vector<int> counts;
};

struct SmoothedSeries {
  std::string key;  // tower_id or zone_id
  Date date{};
  std::vector<double> values;
};

/// counts[m] = number of distinct devices seen at the tower during grid
/// minute m. Events are assumed to belong to one tower and date.
inline RawTowerSeries count_unique_devices(std::span<const NetworkEvent> events, const TimeGrid& grid,
                                           std::string tower_id = {}, Date date = {}) {
  RawTowerSeries out{std::move(tower_id), date, std::vector<int>(grid.size(), 0)};
  std::vector<std::unordered_set<std::string>> seen(grid.size());
  for (const auto& e : events) {
    if (out.tower_id.empty()) out.tower_id = e.tower_id;
    if (!date.ok()) out.date = e.date;
    if (auto m = grid.index_of(e.minute); m && seen[*m].insert(e.device_id).second) ++out.counts[*m];
  }
  return out;
}

/// Tri-cube kernel (1 - |u|^3)^3 on |u| < 1.
inline double tricube(double u) {
  u = std::abs(u);
  if (u >= 1.0) return 0.0;
  const double t = 1.0 - u * u * u;
  return t * t * t;
}

/// Local-linear LOWESS over a fixed time window of `bandwidth_min` minutes
/// (half-width h = bandwidth/2 grid points either side). Distances are
/// normalised by h + 1 so every point in the window carries weight. One
/// pass, no robustness iterations; negative fits clamp to zero.
inline std::vector<double> lowess_values(std::span<const double> y, int bandwidth_min, int step = 1) {
  if (bandwidth_min < 3) throw InputError("LOWESS bandwidth must be at least 3 minutes");
  const int n = static_cast<int>(y.size());
  const int h = std::max(1, bandwidth_min / 2 / step);
  std::vector<double> w(static_cast<std::size_t>(2 * h + 1));
  for (int k = -h; k <= h; ++k) w[static_cast<std::size_t>(k + h)] = tricube(k / static_cast<double>(h + 1));

  std::vector<double> out(y.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - h), hi = std::min(n - 1, i + h);
    // Weighted moments with x centred on the evaluation point.
    double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
    for (int j = lo; j <= hi; ++j) {
      const double x = j - i;
      const double wj = w[static_cast<std::size_t>(j - i + h)];
      s0 += wj;
      s1 += wj * x;
      s2 += wj * x * x;
      t0 += wj * y[static_cast<std::size_t>(j)];
      t1 += wj * x * y[static_cast<std::size_t>(j)];
    }
    const double det = s0 * s2 - s1 * s1;
    double fit;
    if (hi - lo + 1 < 2 || !(std::abs(det) > 1e-12 * s0 * s2)) {
      double sum = 0;
      for (int j = lo; j <= hi; ++j) sum += y[static_cast<std::size_t>(j)];
      fit = sum / (hi - lo + 1);
    } else {
      fit = (s2 * t0 - s1 * t1) / det;
    }
    out[static_cast<std::size_t>(i)] = fit > 0.0 ? fit : 0.0;
  }
  return out;
}

inline SmoothedSeries lowess_smooth(const RawTowerSeries& series, int bandwidth_min, int step = 1) {
  std::vector<double> y(series.counts.begin(), series.counts.end());
  return {series.tower_id, series.date, lowess_values(y, bandwidth_min, step)};
}

/// Divides every value by the single maximum over the whole set.
inline std::vector<SmoothedSeries> normalize_global(std::vector<SmoothedSeries> set) {
  double peak = 0.0;
  for (const auto& s : set)
    for (double v : s.values) peak = std::max(peak, v);
  if (!(peak > 0.0)) throw InputError("nothing to normalize");
  for (auto& s : set)
    for (double& v : s.values) v /= peak;
  return set;
}

/// Debug dump `key,date,minute,raw,smoothed`.
inline std::string format_smoothing_dump(std::span<const RawTowerSeries> raw,
                                         std::span<const SmoothedSeries> smoothed, const TimeGrid& grid) {
  std::string out = "key,date,minute,raw,smoothed\n";
  for (std::size_t i = 0; i < raw.size() && i < smoothed.size(); ++i)
    for (std::size_t m = 0; m < raw[i].counts.size(); ++m)
      out += fmt::format("{},{},{},{},{}\n", raw[i].tower_id, format_date(raw[i].date),
                         format_clock(grid.minute_at(m)), raw[i].counts[m], fmt_real(smoothed[i].values[m]));
  return out;
}

}  // namespace floatpop
