#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include <sys/wait.h>

#include "floatpop/commands.hpp"
#include "unit/support.hpp"

using namespace floatpop;
namespace fs = std::filesystem;

namespace {

synth::SynthScenario tiny_scenario() {
  synth::SynthScenario sc;
  sc.n_zones = 6;
  sc.towers_per_zone_min = 2;
  sc.towers_per_zone_max = 2;
  sc.devices = 80;
  sc.grid = TimeGrid{700, 759, 1};
  sc.effects = {{DayGroup::business, 720, 740, 1.2}};
  sc.seed = 5;
  return sc;
}

fs::path tiny_dataset(const std::string& name) {
  const auto dir = fptest::scratch_dir(name);
  synth::write_dataset(tiny_scenario(), dir);
  return dir;
}

int run_cli(const std::string& args, std::string* err = nullptr) {
  const auto log = fs::temp_directory_path() / "floatpop_test_cli_stderr.txt";
  const std::string cmd = std::string(FLOATPOP_CLI) + " " + args + " >/dev/null 2>" + log.string();
  const int status = std::system(cmd.c_str());
  if (err) *err = read_file(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(CmdIngest, ValidSyntheticDatasetDropsNoDevice) {
  const auto dir = tiny_dataset("cli_valid");
  const auto s = cli::cmd_ingest({dir / "study.cfg", dir / "out", 1});
  EXPECT_EQ(s.filter.input_devices, 80u);
  EXPECT_EQ(s.filter.kept_devices, 80u);
  for (const auto& [rule, n] : s.filter.dropped_by_rule) EXPECT_EQ(n, 0u) << rule;
  const auto m = cli::read_manifest(dir / "out");
  EXPECT_EQ(m.at("inputs").at("events").get<std::string>(), sha256_file(dir / "events.csv"));
  EXPECT_TRUE(m.at("stages").contains("ingest"));
}

TEST(CmdIngest, MissingDeviceDayIsDroppedByRuleTwo) {
  const auto dir = tiny_dataset("cli_missing_day");
  std::istringstream in(read_file(dir / "events.csv"));
  std::string line, kept;
  std::size_t removed = 0;
  while (std::getline(in, line)) {
    if (line.find("2016-07-29T") == 0 && line.find(",dev000007,") != std::string::npos) {
      ++removed;
      continue;
    }
    kept += line + "\n";
  }
  ASSERT_GT(removed, 0u);
  fptest::write_text(dir / "events.csv", kept);
  const auto s = cli::cmd_ingest({dir / "study.cfg", dir / "out", 1});
  EXPECT_EQ(s.filter.kept_devices, 79u);
  EXPECT_EQ(s.filter.dropped_by_rule.at(std::string(kRuleActiveEveryDay)), 1u);
  EXPECT_EQ(s.filter.dropped_by_rule.at(std::string(kRuleTrafficBounds)), 0u);
}

TEST(CmdIngest, MissingZonesFileNamesThePath) {
  const auto dir = tiny_dataset("cli_no_zones");
  fs::remove(dir / "zones.geojson");
  try {
    cli::cmd_ingest({dir / "study.cfg", dir / "out", 1});
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_EQ(e.exit_code(), 2);
    EXPECT_NE(std::string(e.what()).find((dir / "zones.geojson").string()), std::string::npos) << e.what();
  }
}

TEST(CmdProfiles, StaleInputDigestIsAStateError) {
  const auto dir = tiny_dataset("cli_stale");
  const cli::CommonOptions opt{dir / "study.cfg", dir / "out", 1};
  cli::cmd_ingest(opt);
  std::ofstream(dir / "towers.csv", std::ios::app) << "TX999,-70.0,-33.0\n";
  try {
    cli::cmd_profiles(opt);
    FAIL() << "expected StateError";
  } catch (const StateError& e) {
    EXPECT_EQ(e.exit_code(), 3);
    EXPECT_NE(std::string(e.what()).find("towers"), std::string::npos);
  }
}

TEST(CmdProfiles, ModifiedCacheAndMissingStageAreStateErrors) {
  const auto dir = tiny_dataset("cli_cache");
  const cli::CommonOptions opt{dir / "study.cfg", dir / "out", 1};
  EXPECT_THROW(cli::cmd_profiles(opt), StateError);
  cli::cmd_ingest(opt);
  EXPECT_THROW(cli::cmd_sweep(opt, {}), StateError);
  std::ofstream(dir / "out" / cli::kTowerCounts, std::ios::app) << "\n";
  EXPECT_THROW(cli::cmd_profiles(opt), StateError);
}

TEST(CmdRun, WritesArtifactsAndManifest) {
  const auto dir = tiny_dataset("cli_run");
  const cli::CommonOptions opt{dir / "study.cfg", dir / "out", 2};
  const auto s = cli::cmd_run(opt, {});
  for (const char* f : {"fits.csv", "windows.csv", "correlations.csv", "irr_series.csv", "profiles.csv"})
    EXPECT_TRUE(fs::is_regular_file(dir / "out" / f)) << f;
  ASSERT_EQ(s.analysis.scopes.size(), 3u);
  const auto m = cli::read_manifest(dir / "out");
  const auto& sweep = m.at("stages").at("sweep");
  EXPECT_EQ(sweep.at("model").get<std::string>(), "full");
  EXPECT_EQ(sweep.at("day_group").get<std::string>(), "all");
  EXPECT_EQ(sweep.at("conventions").at("count_rounding").get<std::string>(), "half_to_even");
  EXPECT_EQ(sweep.at("conventions").at("standard_errors").get<std::string>(), "observed_information");
  for (const auto& [file, digest] : sweep.at("outputs").items())
    EXPECT_EQ(digest.get<std::string>(), sha256_file(dir / "out" / file)) << file;
  EXPECT_NO_THROW(cli::check_fresh(m, opt.config, parse_study_config(opt.config), opt.out, {"ingest", "profiles", "sweep"}));
}

TEST(CmdSweep, DayGroupOptionPinsOneScope) {
  const auto dir = tiny_dataset("cli_group");
  const cli::CommonOptions opt{dir / "study.cfg", dir / "out", 1};
  cli::SweepOptions so;
  so.day_group = DayGroup::weekend;
  so.model = ModelKind::minimal;
  const auto s = cli::cmd_run(opt, so);
  ASSERT_EQ(s.analysis.scopes.size(), 1u);
  EXPECT_EQ(cli::read_manifest(dir / "out").at("stages").at("sweep").at("day_group").get<std::string>(), "weekend");
}

TEST(Binary, ExitCodes) {
  const auto dir = tiny_dataset("cli_binary");
  const auto cfg = (dir / "study.cfg").string(), out = (dir / "out").string();
  std::string err;
  EXPECT_EQ(run_cli("--version"), 0);
  EXPECT_EQ(run_cli("sweep --config " + cfg + " --out " + out, &err), 3);
  EXPECT_NE(err.find("ingest"), std::string::npos) << err;
  EXPECT_EQ(run_cli("run --config " + cfg + " --out " + out + " --jobs 2"), 0);
  EXPECT_EQ(run_cli("sweep --config " + cfg + " --out " + out + " --model quadratic"), 2);
  EXPECT_EQ(run_cli("ingest --config " + (dir / "nope.cfg").string(), &err), 2);
  EXPECT_NE(err.find("nope.cfg"), std::string::npos) << err;
  fptest::write_text(dir / "towers.csv", read_file(dir / "towers.csv") + "TX1,-70.1,-33.1\n");
  EXPECT_EQ(run_cli("profiles --config " + cfg + " --out " + out), 3);
  fs::remove(dir / "zones.geojson");
  EXPECT_EQ(run_cli("ingest --config " + cfg + " --out " + out, &err), 2);
  EXPECT_NE(err.find("zones.geojson"), std::string::npos) << err;
}

TEST(Binary, SynthCommandMatchesLibrary) {
  const auto dir = fptest::scratch_dir("cli_synth");
  fptest::write_text(dir / "s.scn", "n_zones = 4\ndevices = 30\ngrid_start = 11:00\ngrid_end = 11:29\nseed = 9\n");
  ASSERT_EQ(run_cli("synth --scenario " + (dir / "s.scn").string() + " --out " + (dir / "a").string()), 0);
  synth::write_dataset(synth::parse_scenario(dir / "s.scn"), dir / "b");
  EXPECT_EQ(read_file(dir / "a" / "events.csv"), read_file(dir / "b" / "events.csv"));
  EXPECT_EQ(run_cli("synth --scenario " + (dir / "missing.scn").string() + " --out " + (dir / "c").string()), 2);
  fptest::write_text(dir / "bad.scn", "devices = 0\n");
  EXPECT_EQ(run_cli("synth --scenario " + (dir / "bad.scn").string() + " --out " + (dir / "c").string()), 2);
}
