#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "floatpop/aggregation.hpp"
#include "floatpop/geojson.hpp"
#include "floatpop/glm.hpp"
#include "floatpop/io.hpp"
#include "floatpop/types.hpp"

namespace floatpop {

inline constexpr std::string_view kPogo = "pogo";
inline constexpr std::string_view kIntercept = "intercept";

enum class ModelKind { full, minimal, interactions };

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "full") return ModelKind::full;
  if (s == "minimal") return ModelKind::minimal;
  if (s == "interactions") return ModelKind::interactions;
  throw InputError("unknown model '" + std::string(s) + "' (full, minimal, interactions)");
}

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::full: return "full";
    case ModelKind::minimal: return "minimal";
    case ModelKind::interactions: return "interactions";
  }
  return "?";
}

struct ModelConfig {
  ModelKind kind = ModelKind::full;
  // Restrict observations to one day group; nullopt uses every study date.
  std::optional<DayGroup> day_group;
  double sig_level = 0.05;
  FitOptions fit;
};

/// Smoothed zone values are rounded half-to-even before entering the count
/// likelihood.
inline double round_count(double v) {
  const double r = std::nearbyint(v);
  return r < 0 ? 0.0 : r;
}

/// Row layout and regressors shared by every minute of a sweep. Rows run
/// zone-major over the selected dates.
class DesignLayout {
 public:
  DesignLayout(const ProfileTable& table, std::span<const ZoneRecord> zones, const StudyCalendar& calendar,
               const ModelConfig& config) {
    if (zones.size() != table.zone_ids().size())
      throw InputError("zone list does not match the profile table");
    for (std::size_t z = 0; z < zones.size(); ++z)
      if (zones[z].zone_id != table.zone_ids()[z]) throw InputError("zone order does not match the profile table");
    for (std::size_t d = 0; d < table.dates().size(); ++d) {
      const Date date = table.dates()[d];
      if (!calendar.is_study_date(date)) continue;
      if (config.day_group && day_group_of(classify_day(date)) != *config.day_group) continue;
      date_idx_.push_back(d);
    }
    if (date_idx_.empty()) throw InputError("no study dates left for the requested day group");

    const std::size_t n = zones.size() * date_idx_.size();
    std::vector<double> pogo(n), pokepoints(n);
    std::vector<DayClass> day(n);
    std::vector<LandUse> land(n);
    offset_ = Eigen::VectorXd(static_cast<Eigen::Index>(n));
    for (std::size_t z = 0, row = 0; z < zones.size(); ++z)
      for (std::size_t d : date_idx_) {
        const Date date = table.dates()[d];
        pogo[row] = calendar.is_post(date) ? 1.0 : 0.0;
        day[row] = classify_day(date);
        land[row] = zones[z].land_use;
        pokepoints[row] = zones[z].pokepoint_count;
        offset_[static_cast<Eigen::Index>(row)] = std::log(zones[z].area_km2);
        rows_.push_back({z, d});
        ++row;
      }

    std::vector<std::pair<std::string, std::vector<double>>> cols;
    cols.push_back({std::string(kIntercept), std::vector<double>(n, 1.0)});
    cols.push_back({std::string(kPogo), pogo});
    std::vector<std::pair<std::string, std::vector<double>>> covariates;
    if (config.kind != ModelKind::minimal) {
      add_dummies(covariates, day, {DayClass::business_day, DayClass::saturday, DayClass::sunday});
      add_dummies(covariates, land,
                  {LandUse::residential, LandUse::business_only, LandUse::mixed_activities});
      covariates.push_back({"pokepoints", pokepoints});
    }
    for (auto& c : covariates) cols.push_back(c);
    if (config.kind == ModelKind::interactions)
      for (auto& [name, v] : covariates) {
        std::vector<double> prod(n);
        for (std::size_t i = 0; i < n; ++i) prod[i] = v[i] * pogo[i];
        cols.push_back({"pogo:" + name, prod});
      }

    std::vector<std::pair<std::string, std::vector<double>>> kept;
    for (auto& c : cols)
      if (std::any_of(c.second.begin(), c.second.end(), [](double v) { return v != 0.0; })) kept.push_back(c);
    x_ = Eigen::MatrixXd(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t j = 0; j < kept.size(); ++j) {
      names_.push_back(kept[j].first);
      for (std::size_t i = 0; i < n; ++i)
        x_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kept[j].second[i];
    }
  }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t rows() const { return rows_.size(); }
  const std::vector<std::size_t>& date_indices() const { return date_idx_; }

  DesignMatrix at_minute(const ProfileTable& table, std::size_t minute_index) const {
    DesignMatrix d{names_, x_, offset_, Eigen::VectorXd(static_cast<Eigen::Index>(rows_.size()))};
    for (std::size_t i = 0; i < rows_.size(); ++i)
      d.y[static_cast<Eigen::Index>(i)] = round_count(table.at(rows_[i].first, rows_[i].second, minute_index));
    return d;
  }

 private:
  /// Dummy coding against the first listed level, or against the first
  /// level that occurs when the preferred reference is absent.
  template <class Level>
  static void add_dummies(std::vector<std::pair<std::string, std::vector<double>>>& out,
                          const std::vector<Level>& values, std::vector<Level> levels) {
    std::vector<Level> present;
    for (Level l : levels)
      if (std::find(values.begin(), values.end(), l) != values.end()) present.push_back(l);
    for (std::size_t k = 1; k < present.size(); ++k) {
      std::vector<double> col(values.size());
      for (std::size_t i = 0; i < values.size(); ++i) col[i] = values[i] == present[k] ? 1.0 : 0.0;
      out.push_back({std::string(to_string(present[k])), col});
    }
  }

  std::vector<std::size_t> date_idx_;
  std::vector<std::pair<std::size_t, std::size_t>> rows_;  // (zone, date) indices into the table
  std::vector<std::string> names_;
  Eigen::MatrixXd x_;
  Eigen::VectorXd offset_;
};

inline DesignMatrix build_design(const ProfileTable& table, std::span<const ZoneRecord> zones,
                                 const StudyCalendar& calendar, const ModelConfig& config,
                                 std::size_t minute_index) {
  return DesignLayout(table, zones, calendar, config).at_minute(table, minute_index);
}

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads (0 = hardware).
template <class Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, std::max<std::size_t>(n, 1)));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct SweepResult {
  std::vector<SnapshotFit> fits;  // one per grid minute, in grid order
  std::size_t nonconverged = 0;
  bool nonconvergence_warning = false;  // more than 5% of minutes failed
};

/// One regression per grid minute over every (zone, date) observation.
inline SweepResult run_sweep(const ProfileTable& table, std::span<const ZoneRecord> zones,
                             const StudyCalendar& calendar, const ModelConfig& config, unsigned jobs = 1) {
  const DesignLayout layout(table, zones, calendar, config);
  const std::size_t n_minutes = table.grid().size();
  SweepResult out;
  out.fits.resize(n_minutes);
  parallel_for(n_minutes, jobs, [&](std::size_t m) {
    SnapshotFit f = fit_negbin(layout.at_minute(table, m), config.fit);
    f.minute = table.grid().minute_at(m);
    out.fits[m] = std::move(f);
  });
  for (const auto& f : out.fits) out.nonconverged += f.converged ? 0 : 1;
  out.nonconvergence_warning = out.nonconverged * 20 > n_minutes;
  return out;
}

enum class EffectDirection { positive, negative };

struct EffectWindow {
  std::string factor;
  int start_minute = 0;
  int end_minute = 0;
  double max_irr = 1.0;
  int minute_of_max = 0;
  EffectDirection direction = EffectDirection::positive;

  int length(int step = 1) const { return (end_minute - start_minute) / step + 1; }
};

inline bool is_significant(const SnapshotFit& f, std::size_t k, double sig_level) {
  return f.converged && std::isfinite(f.p[k]) && f.p[k] < sig_level;
}

/// Maximal runs of consecutive fits where `factor` has p < sig_level, each
/// annotated with its extreme IRR by |ln IRR| (earliest minute on ties).
inline std::vector<EffectWindow> extract_windows(std::span<const SnapshotFit> fits, std::string_view factor,
                                                 double sig_level = 0.05) {
  std::vector<EffectWindow> out;
  std::optional<EffectWindow> open;
  double best = -1;
  for (const auto& f : fits) {
    const auto k = f.index_of(factor);
    if (!k || !is_significant(f, *k, sig_level)) {
      if (open) out.push_back(*open), open.reset();
      continue;
    }
    const double strength = std::abs(f.beta[*k]);
    if (!open) {
      open = EffectWindow{std::string(factor), f.minute, f.minute, f.irr[*k], f.minute, EffectDirection::positive};
      best = strength;
    } else {
      open->end_minute = f.minute;
      if (strength > best) {
        best = strength;
        open->max_irr = f.irr[*k];
        open->minute_of_max = f.minute;
      }
    }
    open->direction = open->max_irr >= 1.0 ? EffectDirection::positive : EffectDirection::negative;
  }
  if (open) out.push_back(*open);
  return out;
}

/// Windows ordered by length (longest first, earliest start on ties).
inline std::vector<EffectWindow> longest_windows(std::vector<EffectWindow> windows, std::size_t count) {
  std::stable_sort(windows.begin(), windows.end(), [](const EffectWindow& a, const EffectWindow& b) {
    return a.length() > b.length();
  });
  if (windows.size() > count) windows.resize(count);
  return windows;
}

struct ZoneDifference {
  std::string zone_id;
  DayGroup day_group = DayGroup::business;
  int minute = 0;
  double diff_per_km2 = 0.0;
};

/// (mean over post dates − mean over pre dates) / area for each zone and
/// grid minute, restricted to dates in `group`. Zone-major, minute order.
inline std::vector<ZoneDifference> zone_differences(const ProfileTable& table, std::span<const ZoneRecord> zones,
                                                    const StudyCalendar& calendar, DayGroup group) {
  std::vector<std::size_t> pre, post;
  for (std::size_t d = 0; d < table.dates().size(); ++d) {
    const Date date = table.dates()[d];
    if (day_group_of(classify_day(date)) != group) continue;
    if (calendar.is_post(date)) post.push_back(d);
    else if (calendar.is_study_date(date)) pre.push_back(d);
  }
  if (pre.empty() || post.empty())
    throw InputError(fmt::format("day group '{}' has no dates on one side of the launch", to_string(group)));
  std::map<std::string, std::size_t> zi;
  for (std::size_t z = 0; z < table.zone_ids().size(); ++z) zi.emplace(table.zone_ids()[z], z);

  std::vector<ZoneDifference> out;
  const std::size_t nm = table.grid().size();
  for (const auto& zone : zones) {
    auto it = zi.find(zone.zone_id);
    if (it == zi.end()) throw InputError("zone '" + zone.zone_id + "' has no profile");
    for (std::size_t m = 0; m < nm; ++m) {
      double a = 0, b = 0;
      for (std::size_t d : post) a += table.at(it->second, d, m);
      for (std::size_t d : pre) b += table.at(it->second, d, m);
      const double diff = (a / post.size() - b / pre.size()) / zone.area_km2;
      out.push_back({zone.zone_id, group, table.grid().minute_at(m), diff});
    }
  }
  return out;
}

inline std::vector<ZoneDifference> differences_at(std::span<const ZoneDifference> diffs, int minute) {
  std::vector<ZoneDifference> out;
  std::copy_if(diffs.begin(), diffs.end(), std::back_inserter(out),
               [&](const ZoneDifference& d) { return d.minute == minute; });
  return out;
}

struct CorrelationResult {
  double r = 0;
  double p = 1;
  std::size_t n = 0;
};

inline CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 3) throw InputError("correlation needs at least 3 paired values");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0) || !(syy > 0)) throw NumericalError("degenerate correlation");
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  double p = 0.0;
  if (std::abs(r) < 1.0) {
    const double df = static_cast<double>(n - 2);
    const double t = r * std::sqrt(df / (1.0 - r * r));
    const boost::math::students_t dist(df);
    p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return {r, std::clamp(p, 0.0, 1.0), n};
}

/// Pearson correlation across zones between the per-km² difference and the
/// PokéPoint density (count / area).
inline CorrelationResult pokepoint_correlation(std::span<const ZoneDifference> diffs,
                                               std::span<const ZoneRecord> zones) {
  std::map<std::string, const ZoneRecord*> by_id;
  for (const auto& z : zones) by_id.emplace(z.zone_id, &z);
  std::vector<double> x, y;
  for (const auto& d : diffs) {
    auto it = by_id.find(d.zone_id);
    if (it == by_id.end()) throw InputError("difference for unknown zone '" + d.zone_id + "'");
    x.push_back(d.diff_per_km2);
    y.push_back(it->second->pokepoint_count / it->second->area_km2);
  }
  return pearson(x, y);
}

/// GeoJSON FeatureCollection with one feature per difference; geometry is
/// copied from the matching zone.
inline json export_choropleth(std::span<const ZoneDifference> diffs, std::span<const ZoneRecord> zones) {
  std::map<std::string, const ZoneRecord*> by_id;
  for (const auto& z : zones) by_id.emplace(z.zone_id, &z);
  json features = json::array();
  for (const auto& d : diffs) {
    auto it = by_id.find(d.zone_id);
    if (it == by_id.end()) throw InputError("difference for unknown zone '" + d.zone_id + "'");
    features.push_back(json{{"type", "Feature"},
                            {"properties",
                             {{"zone_id", d.zone_id},
                              {"diff_per_km2", d.diff_per_km2},
                              {"day_group", std::string(to_string(d.day_group))},
                              {"minute", format_clock(d.minute)}}},
                            {"geometry", geometry_to_json(it->second->polygons)}});
  }
  return json{{"type", "FeatureCollection"}, {"features", features}};
}

struct IrrSeriesRow {
  int minute = 0;
  std::string factor;
  double irr = 1, ci_low = 1, ci_high = 1, p = 1, alpha = 0;
  bool ci_excludes_one = false;
  bool significant_bonferroni = false;
  bool converged = false;
};

/// Per-minute IRR, CI, p and α for each requested factor. A minute is
/// flagged when its 95% interval does not contain 1.
inline std::vector<IrrSeriesRow> irr_timeseries_report(std::span<const SnapshotFit> fits,
                                                       std::span<const std::string> factors,
                                                       double sig_level = 0.05) {
  std::vector<IrrSeriesRow> rows;
  const double n = static_cast<double>(fits.size());
  for (const auto& f : fits)
    for (const auto& name : factors) {
      const auto k = f.index_of(name);
      if (!k) continue;
      IrrSeriesRow r;
      r.minute = f.minute;
      r.factor = name;
      r.irr = f.irr[*k];
      r.ci_low = f.ci_low[*k];
      r.ci_high = f.ci_high[*k];
      r.p = f.p[*k];
      r.alpha = f.alpha;
      r.converged = f.converged;
      r.ci_excludes_one = f.converged && (r.ci_low > 1.0 || r.ci_high < 1.0);
      r.significant_bonferroni = f.converged && std::isfinite(r.p) && r.p * n < sig_level;
      rows.push_back(r);
    }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

inline std::string format_fits_csv(std::span<const SnapshotFit> fits, double sig_level = 0.05,
                                   std::string_view day_group = "all", bool header = true) {
  std::string out = header ? "day_group,minute,term,beta,se,irr,ci_low,ci_high,z,p,significant,"
                             "significant_bonferroni,alpha,converged,poisson_limit,n_obs,log_likelihood\n"
                           : "";
  const double n = static_cast<double>(fits.size());
  for (const auto& f : fits)
    for (std::size_t k = 0; k < f.names.size(); ++k) {
      const bool sig = is_significant(f, k, sig_level);
      const bool bonf = sig && f.p[k] * n < sig_level;
      out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", day_group, format_clock(f.minute),
                         f.names[k],
                         fmt_real(f.beta[k]), fmt_real(f.se[k]), fmt_real(f.irr[k]), fmt_real(f.ci_low[k]),
                         fmt_real(f.ci_high[k]), fmt_real(f.z[k]), fmt_real(f.p[k]), sig ? 1 : 0, bonf ? 1 : 0,
                         fmt_real(f.alpha), f.converged ? 1 : 0, f.poisson_limit ? 1 : 0, f.n_obs,
                         fmt_real(f.log_likelihood));
    }
  return out;
}

inline std::string format_windows_csv(std::span<const EffectWindow> windows, std::string_view day_group = "all",
                                      bool header = true) {
  std::string out = header ? "day_group,factor,start,end,length_min,max_irr,minute_of_max,direction\n" : "";
  for (const auto& w : windows)
    out += fmt::format("{},{},{},{},{},{},{},{}\n", day_group, w.factor, format_clock(w.start_minute),
                       format_clock(w.end_minute), w.end_minute - w.start_minute + 1, fmt_real(w.max_irr),
                       format_clock(w.minute_of_max),
                       w.direction == EffectDirection::positive ? "positive" : "negative");
  return out;
}

inline std::string format_irr_series_csv(std::span<const IrrSeriesRow> rows, std::string_view day_group = "all",
                                         bool header = true) {
  std::string out = header ? "day_group,minute,factor,irr,ci_low,ci_high,p,alpha,ci_excludes_one,"
                             "significant_bonferroni,converged\n"
                           : "";
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", day_group, format_clock(r.minute), r.factor,
                       fmt_real(r.irr),
                       fmt_real(r.ci_low), fmt_real(r.ci_high), fmt_real(r.p), fmt_real(r.alpha),
                       r.ci_excludes_one ? 1 : 0, r.significant_bonferroni ? 1 : 0, r.converged ? 1 : 0);
  return out;
}

}  // namespace floatpop
