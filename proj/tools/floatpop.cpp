#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "floatpop/commands.hpp"

namespace fs = std::filesystem;
using namespace floatpop;

namespace {

void add_common(CLI::App* cmd, cli::CommonOptions& opt, bool with_config = true) {
  if (with_config) cmd->add_option("--config", opt.config, "study configuration file")->required();
  cmd->add_option("--out", opt.out, "output / cache directory");
  cmd->add_option("--jobs", opt.jobs, "worker threads (0 = all cores)");
}

void add_sweep(CLI::App* cmd, cli::SweepOptions& sweep, std::string& model, std::string& group) {
  cmd->add_option("--sig-level", sweep.sig_level, "two-sided significance level")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--model", model, "full, minimal or interactions")
      ->check(CLI::IsMember({"full", "minimal", "interactions"}));
  cmd->add_option("--day-group", group, "restrict the sweep to business or weekend dates")
      ->check(CLI::IsMember({"business", "weekend"}));
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Floating-population intervention analysis"};
  app.set_version_flag("--version", std::string(FLOATPOP_VERSION));
  app.require_subcommand(1);

  cli::CommonOptions opt;
  cli::SweepOptions sweep;
  std::string model = "full", group;
  fs::path scenario;

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  synth->add_option("--scenario", scenario, "scenario file")->required();
  add_common(synth, opt, false);
  auto* ingest = app.add_subcommand("ingest", "validate inputs, filter devices, cache tower counts");
  add_common(ingest, opt);
  auto* profiles = app.add_subcommand("profiles", "smooth tower series and build zone profiles");
  add_common(profiles, opt);
  auto* sweep_cmd = app.add_subcommand("sweep", "per-minute regressions and post-analysis");
  add_common(sweep_cmd, opt);
  add_sweep(sweep_cmd, sweep, model, group);
  auto* run = app.add_subcommand("run", "ingest, profiles and sweep in one go");
  add_common(run, opt);
  add_sweep(run, sweep, model, group);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    sweep.model = parse_model_kind(model);
    if (!group.empty()) sweep.day_group = parse_day_group(group);

    if (*synth) {
      const auto world = cli::cmd_synth(scenario, opt.out, opt.jobs);
      std::cout << "wrote " << world.zones.size() << " zones, " << world.towers.size() << " towers, "
                << world.pois.size() << " POIs to " << opt.out.string() << '\n';
    } else if (*ingest) {
      const auto s = cli::cmd_ingest(opt);
      print_warnings(s.warnings);
      std::cout << format_filter_report_summary(s.filter);
    } else if (*profiles) {
      cli::cmd_profiles(opt);
      std::cout << "wrote " << (opt.out / cli::kProfiles).string() << '\n';
    } else {
      const auto s = *run ? cli::cmd_run(opt, sweep) : cli::cmd_sweep(opt, sweep);
      print_warnings(s.analysis.warnings);
      for (const auto& sc : s.analysis.scopes)
        for (const auto& w : sc.windows)
          std::cout << sc.day_group << ' ' << format_clock(w.start_minute) << '-' << format_clock(w.end_minute)
                    << " max IRR " << fmt_real(w.max_irr) << " at " << format_clock(w.minute_of_max) << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
