#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "floatpop/io.hpp"
#include "floatpop/pipeline.hpp"
#include "floatpop/synth.hpp"

#ifndef FLOATPOP_VERSION
#define FLOATPOP_VERSION "0.0.0"
#endif

namespace floatpop::cli {

namespace fs = std::filesystem;

inline constexpr std::string_view kManifest = "manifest.json";
inline constexpr std::string_view kTowerCounts = "tower_counts.csv";
inline constexpr std::string_view kZonesCache = "selected_zones.geojson";
inline constexpr std::string_view kProfiles = "profiles.csv";

struct CommonOptions {
  fs::path config;
  fs::path out = "out";
  unsigned jobs = 1;
};

struct SweepOptions {
  double sig_level = 0.05;
  ModelKind model = ModelKind::full;
  std::optional<DayGroup> day_group;
};

/// Wall-clock timer for manifest stage timings.
class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline void require_file(const fs::path& p, std::string_view what) {
  if (p.empty()) throw ConfigError(fmt::format("config does not name the {} file", what));
  if (!fs::is_regular_file(p)) throw InputError(fmt::format("{} file not found: {}", what, p.string()));
}

inline std::map<std::string, fs::path> input_files(const fs::path& config_path, const StudyConfig& cfg) {
  return {{"config", config_path},
          {"events", cfg.events_path},
          {"towers", cfg.towers_path},
          {"zones", cfg.zones_path},
          {"pois", cfg.pois_path}};
}

inline StudyConfig load_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw InputError("config file not found: " + path.string());
  auto cfg = parse_study_config(path);
  require_file(cfg.events_path, "events");
  require_file(cfg.towers_path, "towers");
  require_file(cfg.zones_path, "zones");
  require_file(cfg.pois_path, "pois");
  return cfg;
}

inline json read_manifest(const fs::path& out) {
  const auto p = out / kManifest;
  if (!fs::is_regular_file(p)) throw StateError("no cache manifest in " + out.string() + "; run ingest first");
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw StateError("cache manifest " + p.string() + " is corrupt: " + e.what());
  }
}

inline void write_manifest(const fs::path& out, const json& m) {
  write_file_atomic(out / kManifest, m.dump(2) + "\n");
}

/// Verifies that input files and recorded stage outputs still hash to the
/// digests stored in the manifest.
inline void check_fresh(const json& manifest, const fs::path& config_path, const StudyConfig& cfg,
                        const fs::path& out, std::initializer_list<std::string_view> stages) {
  const auto& digests = manifest.at("inputs");
  for (const auto& [name, path] : input_files(config_path, cfg)) {
    if (!digests.contains(name)) throw StateError("manifest lacks a digest for " + name);
    if (digests.at(name).get<std::string>() != sha256_file(path))
      throw StateError(fmt::format("{} ({}) changed since the cache was built; rerun ingest", name, path.string()));
  }
  for (auto stage : stages) {
    const std::string key(stage);
    if (!manifest.at("stages").contains(key))
      throw StateError(fmt::format("stage '{}' has not been run for {}", key, out.string()));
    for (const auto& [file, digest] : manifest.at("stages").at(key).at("outputs").items()) {
      const auto p = out / file;
      if (!fs::is_regular_file(p)) throw StateError("cached file missing: " + p.string());
      if (sha256_file(p) != digest.get<std::string>()) throw StateError("cached file modified: " + p.string());
    }
  }
}

inline json stage_record(double seconds, const fs::path& out, const std::vector<std::string>& files) {
  json outputs = json::object();
  for (const auto& f : files) outputs[f] = sha256_file(out / f);
  return json{{"seconds", seconds}, {"outputs", outputs}};
}

// ---------------------------------------------------------------------------
// Tower-count cache
// ---------------------------------------------------------------------------

/// `tower_id,date,counts` with the per-minute counts space separated.
inline std::string format_tower_counts(std::span<const RawTowerSeries> series) {
  std::string out = "tower_id,date,counts\n";
  for (const auto& s : series) {
    out += s.tower_id + "," + format_date(s.date) + ",";
    for (std::size_t m = 0; m < s.counts.size(); ++m) {
      if (m) out += " ";
      out += std::to_string(s.counts[m]);
    }
    out += "\n";
  }
  return out;
}

inline std::vector<RawTowerSeries> parse_tower_counts(std::string_view text, std::size_t grid_length) {
  auto lines = detail::split(text, '\n');
  if (lines.empty() || detail::trim(lines[0]) != "tower_id,date,counts")
    throw StateError("tower count cache has an unexpected header");
  std::vector<RawTowerSeries> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto line = detail::trim(lines[i]);
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 3) throw StateError("malformed tower count row");
    RawTowerSeries s{std::string(f[0]), parse_date(f[1]), {}};
    for (auto v : detail::split(f[2], ' ')) {
      int c = 0;
      if (!detail::parse_int(v, c)) throw StateError("malformed tower count");
      s.counts.push_back(c);
    }
    if (s.counts.size() != grid_length) throw StateError("tower count row does not match the time grid");
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string format_rejections_csv(const RejectionReport& r) {
  std::string out = "reason,count\n";
  out += fmt::format("accepted,{}\n", r.accepted);
  for (const auto& [reason, n] : r.rejected) out += fmt::format("{},{}\n", reason, n);
  return out;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct IngestSummary {
  DeviceFilterReport filter;
  std::vector<std::string> warnings;
};

inline IngestSummary cmd_ingest(const CommonOptions& opt) {
  Stopwatch clock;
  const auto cfg = load_config(opt.config);
  json inputs = json::object();
  for (const auto& [name, path] : input_files(opt.config, cfg)) inputs[name] = sha256_file(path);

  auto in = load_inputs(cfg);
  auto result = ingest_events(cfg, in);

  fs::create_directories(opt.out);
  write_file_atomic(opt.out / kTowerCounts, format_tower_counts(result.tower_counts));
  write_file_atomic(opt.out / kZonesCache, zones_to_geojson(in.zones, true).dump(1) + "\n");
  write_file_atomic(opt.out / "filter_report.csv", format_filter_report_csv(result.filter));
  write_file_atomic(opt.out / "filter_summary.txt", format_filter_report_summary(result.filter));
  write_file_atomic(opt.out / "rejected_rows.csv", format_rejections_csv(result.rejections));

  std::vector<std::string> warnings = in.warnings;
  if (result.rejections.total_rejected() > 0)
    warnings.push_back(fmt::format("{} malformed event rows skipped", result.rejections.total_rejected()));
  if (result.filter.kept_devices == 0) warnings.push_back("no device passed the filter");

  json m{{"tool", "floatpop"},
         {"version", FLOATPOP_VERSION},
         {"config", {{"path", opt.config.string()}, {"text", format_study_config(cfg)}}},
         {"inputs", inputs},
         {"selected_zones", in.zones.size()},
         {"zones_in_file", in.zones_in_file},
         {"events_seen", result.events_seen},
         {"events_in_grid", result.events_in_grid},
         {"stages", json::object()},
         {"warnings", warnings}};
  m["stages"]["ingest"] = stage_record(clock.seconds(), opt.out,
                                       {std::string(kTowerCounts), std::string(kZonesCache), "filter_report.csv"});
  write_manifest(opt.out, m);
  return {result.filter, warnings};
}

inline void cmd_profiles(const CommonOptions& opt) {
  Stopwatch clock;
  const auto cfg = load_config(opt.config);
  auto m = read_manifest(opt.out);
  check_fresh(m, opt.config, cfg, opt.out, {"ingest"});

  StudyInputs in;
  in.zones = parse_zones_geojson(json::parse(read_file(opt.out / kZonesCache)));
  in.towers = parse_towers(cfg.towers_path);
  in.assignment = assign_towers(in.towers, in.zones);
  const auto counts = parse_tower_counts(read_file(opt.out / kTowerCounts), cfg.grid.size());
  const auto table = build_profiles(counts, in, cfg, opt.jobs);
  write_file_atomic(opt.out / kProfiles, format_profiles_csv(table));

  m["stages"].erase("sweep");
  m["stages"]["profiles"] = stage_record(clock.seconds(), opt.out, {std::string(kProfiles)});
  write_manifest(opt.out, m);
}

struct SweepSummary {
  AnalysisResult analysis;
  std::vector<std::string> files;
};

inline SweepSummary cmd_sweep(const CommonOptions& opt, const SweepOptions& sweep) {
  Stopwatch clock;
  const auto cfg = load_config(opt.config);
  auto m = read_manifest(opt.out);
  check_fresh(m, opt.config, cfg, opt.out, {"ingest", "profiles"});

  const auto zones = parse_zones_geojson(json::parse(read_file(opt.out / kZonesCache)));
  std::vector<std::string> ids;
  for (const auto& z : zones) ids.push_back(z.zone_id);
  const auto table = parse_profiles_csv(read_file(opt.out / kProfiles), cfg.grid, ids, cfg.calendar.study_dates());

  ModelConfig mc;
  mc.kind = sweep.model;
  mc.day_group = sweep.day_group;
  mc.sig_level = sweep.sig_level;
  SweepSummary s{analyze(table, zones, cfg.calendar, mc, opt.jobs), {}};

  // Choropleths from an earlier run may no longer apply.
  for (const auto& e : fs::directory_iterator(opt.out)) {
    const auto name = e.path().filename().string();
    if (name.rfind("choropleth_", 0) == 0 && e.path().extension() == ".geojson") fs::remove(e.path());
  }
  for (const auto& [name, content] : render_outputs(s.analysis, sweep.sig_level)) {
    write_file_atomic(opt.out / name, content);
    s.files.push_back(name);
  }

  std::size_t nonconverged = 0;
  bool warn = false;
  for (const auto& sc : s.analysis.scopes) {
    nonconverged += sc.sweep.nonconverged;
    warn = warn || sc.sweep.nonconvergence_warning;
  }
  m["stages"]["sweep"] = stage_record(clock.seconds(), opt.out, s.files);
  m["stages"]["sweep"]["model"] = std::string(to_string(sweep.model));
  m["stages"]["sweep"]["sig_level"] = sweep.sig_level;
  m["stages"]["sweep"]["day_group"] = sweep.day_group ? std::string(to_string(*sweep.day_group)) : "all";
  m["stages"]["sweep"]["nonconverged_minutes"] = nonconverged;
  m["stages"]["sweep"]["nonconvergence_warning"] = warn;
  m["stages"]["sweep"]["conventions"] = {{"count_rounding", "half_to_even"},
                                         {"alpha_estimation", "profile_ml_brent_log_alpha"},
                                         {"standard_errors", "observed_information"}};
  for (const auto& w : s.analysis.warnings) m["warnings"].push_back(w);
  write_manifest(opt.out, m);
  return s;
}

inline SweepSummary cmd_run(const CommonOptions& opt, const SweepOptions& sweep) {
  cmd_ingest(opt);
  cmd_profiles(opt);
  return cmd_sweep(opt, sweep);
}

inline synth::SynthWorld cmd_synth(const fs::path& scenario_path, const fs::path& out, unsigned jobs) {
  if (!fs::is_regular_file(scenario_path)) throw InputError("scenario file not found: " + scenario_path.string());
  return synth::write_dataset(synth::parse_scenario(scenario_path), out, jobs);
}

}  // namespace floatpop::cli
