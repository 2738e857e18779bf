// aoe: train OE/AOE variants on the synthetic benchmark, run the theory
// checks, or compare several configs.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "aoe/error.hpp"
#include "aoe/experiment.hpp"

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw aoe::InvalidArgument("cannot open " + path.string() + " for writing");
  os << text;
}

// One-line machine-readable error record on stderr.
int report_error(const char* kind, const std::string& what, std::size_t line = 0) {
  std::cerr << "error: kind=" << kind;
  if (line) std::cerr << " line=" << line;
  std::cerr << " message=\"" << what << "\"\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive outlier exposure on a synthetic 2-D benchmark"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::string runs_dir = "runs";
  auto* run = app.add_subcommand("run", "train every seed of one config and persist the records");
  run->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed_override, "run only this seed");
  run->add_option("--out", runs_dir, "output root")->capture_default_str();

  std::size_t trials = 1000;
  std::uint64_t theory_seed = 0;
  std::string theory_out;
  auto* theory = app.add_subcommand("theory", "randomized checks of the margin dynamics and bounds");
  theory->add_option("--trials", trials, "trials per check")->capture_default_str();
  theory->add_option("--seed", theory_seed, "rng seed")->capture_default_str();
  theory->add_option("--out", theory_out, "report path (default reports/theory_seed<N>.json)");

  std::vector<std::string> config_paths;
  std::string compare_out;
  std::string compare_runs = "runs";
  auto* compare = app.add_subcommand("compare", "run several configs on shared data and tabulate");
  compare->add_option("--configs", config_paths, "config files")->required()->check(CLI::ExistingFile);
  compare->add_option("--out", compare_out, "comparison CSV path")->required();
  compare->add_option("--runs", compare_runs, "output root for the per-run records")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto config = aoe::load_config(config_path);
      if (seed_override) config.seeds = {*seed_override};
      const auto summary = aoe::run_experiment(config, fs::path(runs_dir));
      std::cout << (fs::path(runs_dir) / summary.config_hash).string() << "\n";
      for (const auto& m : summary.aggregate) {
        std::printf("%-24s %.6f +- %.6f\n", m.name.c_str(), m.mean, m.stddev);
      }
      return 0;
    }
    if (*theory) {
      const auto report = aoe::run_theory_suite(trials, theory_seed);
      const fs::path out = theory_out.empty()
                               ? fs::path("reports") / ("theory_seed" + std::to_string(theory_seed) + ".json")
                               : fs::path(theory_out);
      write_text(out, report.to_json());
      for (const auto& c : report.checks) {
        std::printf("%-40s %s  worst=%.3e  tol=%.1e\n", c.name.c_str(), c.passed ? "pass" : "FAIL",
                    c.worst_residual, c.tolerance);
      }
      return report.all_passed() ? 0 : 1;
    }
    if (*compare) {
      std::vector<aoe::ExperimentConfig> configs;
      for (const auto& p : config_paths) configs.push_back(aoe::load_config(p));
      const auto table = aoe::compare_methods(configs, fs::path(compare_runs));
      write_text(compare_out, table);
      std::cout << table;
      return 0;
    }
  } catch (const aoe::ParseError& e) {
    return report_error("parse", e.what(), e.line());
  } catch (const aoe::InvalidArgument& e) {
    return report_error("invalid_argument", e.what());
  } catch (const std::exception& e) {
    return report_error("runtime", e.what());
  }
  return 0;
}
