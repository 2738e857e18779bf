#pragma once

// End-to-end experiment driver: configuration, seeded training of the OE/AOE
// variants, per-epoch evaluation, persistence and method comparison. Also
// hosts the randomized theory suite.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aoe/detection.hpp"
#include "aoe/metrics.hpp"
#include "aoe/objectives.hpp"
#include "aoe/synthdata.hpp"

namespace aoe {

enum class Method { ce_only, oe, aoe_joint, aoe_alternating, fixed_T };

Method parse_method(std::string_view name);
std::string_view to_string(Method m);

struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double lr_base = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  Method method = Method::aoe_joint;
  double fixed_T = 3.5;
  AlphaSchedule alpha_schedule;
  double temp_init = 1.5;
  double eta_T = 10.0;
  double t_min = 1.0;
  double t_max = 10.0;
  std::size_t t_updates_per_step = 1;
  AoeOptions aoe;
  ScoreKind score;
  double tpr_target = 0.95;
  std::vector<std::uint64_t> seeds = {0};
  std::string label;  // display name; empty means derived from the method

  void validate() const;
  // Layer widths: input, hidden..., K.
  std::vector<std::size_t> arch_dims() const;
  std::string display_label() const;
};

// Sectioned key = value text; see docs/config.md. Unknown sections or keys
// are parse errors.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Canonical text with every key present; parse_config(to_config_text(c)) == c.
std::string to_config_text(const ExperimentConfig& config);
// FNV-1a 64 over the canonical text without `seeds` and `label`, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  LossBreakdown loss;  // batch means over the epoch
  double T = 0.0;      // temperature after the epoch's last step
  double lr = 0.0;
  EvalReport near;
  EvalReport far;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  EvalReport final_near;
  EvalReport final_far;
  double train_outlier_margin = 0.0;  // oversoftening_mean_margin on the training outliers
  double final_T = 0.0;
  MlpParams params;
};

struct MetricStat {
  std::string name;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for one seed
};

struct RunSummary {
  std::string config_hash;
  std::string label;
  Method method = Method::aoe_joint;
  std::vector<std::uint64_t> seeds;
  std::vector<SeedResult> per_seed;
  std::vector<MetricStat> aggregate;

  const MetricStat& metric(std::string_view name) const;
};

// Names of the per-seed scalars that are aggregated, in table order.
const std::vector<std::string>& summary_metric_names();
double seed_metric(const SeedResult& r, std::string_view name);
std::vector<MetricStat> aggregate_metrics(const std::vector<SeedResult>& seeds);

// Trains and evaluates one seed. Pure function of (config, seed).
SeedResult run_seed(const ExperimentConfig& config, std::uint64_t seed);

// All configured seeds. When `out_root` is set, writes
// <out_root>/<hash>/config.ini, <hash>/run_summary.json and, per seed,
// <hash>/<seed>/epochs.csv, summary.json and checkpoint.json.
RunSummary run_experiment(const ExperimentConfig& config,
                          const std::optional<std::filesystem::path>& out_root = std::nullopt);

std::string epochs_csv(const std::vector<EpochRecord>& records);
std::string seed_summary_json(const std::string& hash, const ExperimentConfig& config, const SeedResult& r);
std::string run_summary_json(const RunSummary& summary);
// Per-seed scalars read back from a seed summary.json document.
SeedResult seed_result_from_json(std::string_view text);

// One row per (method, metric): label,metric,mean,std,n_seeds.
std::string comparison_csv(const std::vector<RunSummary>& runs);
// Runs every config (they must share dataset spec and seeds) and returns the table.
std::string compare_methods(const std::vector<ExperimentConfig>& configs,
                            const std::optional<std::filesystem::path>& out_root = std::nullopt);

struct TheoryCheck {
  std::string name;
  bool passed = false;
  double worst_residual = 0.0;
  double tolerance = 0.0;
  std::size_t trials = 0;
};

struct TheoryReport {
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::vector<TheoryCheck> checks;

  bool all_passed() const noexcept;
  std::string to_json() const;
};

TheoryReport run_theory_suite(std::size_t trials, std::uint64_t seed);

}  // namespace aoe
