#pragma once

// Experiment harness: YAML configuration, the loss x noise x seed grid, the
// property-verification suites and their JSON report, and the result tables.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdw2s/synth.hpp"
#include "fdw2s/w2sg.hpp"

namespace fdw2s {

struct ExperimentGrid {
  TaskSpec task;
  std::vector<TrainLoss> losses;
  std::vector<double> noise_levels;
  std::vector<std::uint64_t> seeds;
  TrainConfig train;  // loss and seed are overridden per cell

  /// Six trainable divergences x noise {0, 0.1, ..., 0.5} x seeds {1..5}.
  static ExperimentGrid defaults();
  void validate() const;
  std::size_t cells() const { return losses.size() * noise_levels.size() * seeds.size(); }
};

inline const std::vector<std::string> kSuiteNames = {"divergence", "gradients", "pinsker", "bound",
                                                     "equivalence"};

struct VerifyOptions {
  std::vector<std::string> suites = kSuiteNames;
  std::size_t trials = 100000;
  std::uint64_t seed = 0;
};

struct Config {
  ExperimentGrid grid = ExperimentGrid::defaults();
  std::size_t workers = 1;
  VerifyOptions verify;
};

/// Parses the YAML config. Every key is optional; unknown keys are a
/// ConfigError. Layout:
///
///   task:   {input_dim, teacher, samples_per_split}
///   train:  {learning_rate, batch_size, epochs, aux, beta_final,
///            warmup_fraction, threshold, clamp_eps, strong_width,
///            activation, train_backbone}
///   grid:   {losses: [...], noise_levels: [...], seeds: [...]}
///   run:    {workers}
///   verify: {suites: [...], trials, seed}
Config parse_config(const std::string& yaml_text);
Config load_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Grid

/// Column order of runs.csv (and key order of runs.json rows).
const std::vector<std::string>& run_columns();
std::vector<std::string> run_row(const RunResult& r);

struct CellFailure {
  std::string loss;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  std::string message;
};

struct GridOutcome {
  std::vector<RunResult> runs;  // grid order, failed cells omitted
  std::vector<CellFailure> failures;
  std::size_t bound_violations = 0;
  bool ok() const { return failures.empty() && bound_violations == 0; }
};

/// Runs every (loss, noise, seed) cell, seeds outermost, then noise, then
/// loss. Task generation and the weak teacher are shared by all cells of a
/// seed. Cells run on up to `workers` threads; results are collected in grid
/// order so output is independent of scheduling.
GridOutcome run_grid_cells(const ExperimentGrid& grid, std::size_t workers = 1);

/// run_grid_cells plus output files in out_dir: runs.csv, runs.json,
/// summary.csv, summary.json (and failures.json when any cell failed).
GridOutcome run_grid(const ExperimentGrid& grid, const std::filesystem::path& out_dir,
                     std::size_t workers = 1);

/// Median over seeds of a metric, rows = losses in first-seen order, columns =
/// noise levels ascending.
struct SummaryTable {
  std::vector<std::string> losses;
  std::vector<double> noise_levels;
  std::vector<std::vector<double>> strong_accuracy;  // [loss][noise]
  std::vector<double> weak_accuracy;                 // [noise]

  double at(const std::string& loss, double noise) const;
};

struct RunRow {
  std::string loss;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  double weak_test_accuracy = 0.0;
  double strong_test_accuracy = 0.0;
};

RunRow to_row(const RunResult& r);
SummaryTable summarize(const std::vector<RunRow>& rows);
std::vector<RunRow> read_runs_csv(const std::filesystem::path& path);

void write_runs_csv(std::ostream& os, const std::vector<RunResult>& runs);
nlohmann::ordered_json runs_json(const std::vector<RunResult>& runs);
void write_summary_csv(std::ostream& os, const SummaryTable& table);
nlohmann::ordered_json summary_json(const SummaryTable& table);

double median(std::vector<double> values);

// ---------------------------------------------------------------------------
// Verification suites

struct CheckResult {
  std::string name;
  bool passed = true;
  std::size_t cases = 0;
  double worst = 0.0;  // worst error / residual / ratio, meaning given by name
  double tolerance = 0.0;
  nlohmann::ordered_json witness;  // null unless the check failed
};

struct SuiteReport {
  std::string name;
  std::vector<CheckResult> checks;
  bool passed() const;
};

struct VerifyReport {
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::vector<SuiteReport> suites;
  bool passed() const;
  nlohmann::ordered_json to_json() const;
};

/// Throws ConfigError on an empty or unknown suite name.
VerifyReport run_verify(const VerifyOptions& opts);

SuiteReport verify_divergence_suite(std::size_t pairs_per_kind, std::uint64_t seed);
SuiteReport verify_gradient_suite(std::size_t cases_per_kind, std::uint64_t seed);
SuiteReport verify_pinsker_suite(std::size_t trials, std::uint64_t seed);
SuiteReport verify_bound_suite(std::size_t trials, std::uint64_t seed);
SuiteReport verify_equivalence_suite(std::size_t cases_per_cell, std::uint64_t seed);

/// Number formatting shared by every CSV writer: 10 significant digits.
std::string format_number(double v);

}  // namespace fdw2s
