// fdw2s: grid runner and verification front-end.
//
// Exit codes: 0 all checks passed, 1 a check or run failed, 2 usage or
// configuration error, 3 any other error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fdw2s/errors.hpp"
#include "fdw2s/experiment.hpp"

namespace fs = std::filesystem;
using namespace fdw2s;

namespace {

constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitError = 3;

Config load(const std::optional<std::string>& path) {
  return path ? load_config(*path) : parse_config("");
}

int cmd_run(const std::optional<std::string>& config, const std::string& out,
            std::optional<std::size_t> workers, std::optional<std::uint64_t> seed) {
  Config cfg = load(config);
  if (seed) cfg.grid.seeds = {*seed};
  const std::size_t w = workers.value_or(cfg.workers);
  if (w == 0) throw ConfigError("--workers must be positive");
  std::cerr << "running " << cfg.grid.cells() << " cells on " << w << " worker(s)\n";
  const GridOutcome res = run_grid(cfg.grid, out, w);

  std::vector<RunRow> rows;
  for (const auto& r : res.runs) rows.push_back(to_row(r));
  write_summary_csv(std::cout, summarize(rows));

  for (const auto& f : res.failures)
    std::cerr << "FAILED cell loss=" << f.loss << " noise=" << format_number(f.noise_level)
              << " seed=" << f.seed << ": " << f.message << '\n';
  if (res.bound_violations)
    std::cerr << res.bound_violations << " run(s) violated the risk-gap bound\n";
  std::cerr << "wrote " << res.runs.size() << " rows to " << (fs::path(out) / "runs.csv").string() << '\n';
  return res.ok() ? 0 : kExitFailed;
}

int cmd_verify(const std::optional<std::string>& config, const std::string& out,
               const std::vector<std::string>& suites, std::optional<std::size_t> trials,
               std::optional<std::uint64_t> seed) {
  Config cfg = load(config);
  VerifyOptions opts = cfg.verify;
  if (!suites.empty()) opts.suites = suites;
  if (trials) opts.trials = *trials;
  if (seed) opts.seed = *seed;
  const VerifyReport rep = run_verify(opts);

  fs::create_directories(out);
  const fs::path path = fs::path(out) / "verify.json";
  std::ofstream(path, std::ios::binary) << rep.to_json().dump(2) << '\n';

  for (const auto& s : rep.suites)
    for (const auto& c : s.checks)
      std::cout << (c.passed ? "PASS " : "FAIL ") << s.name << ' ' << c.name << " cases=" << c.cases
                << " worst=" << format_number(c.worst) << " tol=" << format_number(c.tolerance)
                << '\n';
  std::cerr << "report: " << path.string() << '\n';
  return rep.passed() ? 0 : kExitFailed;
}

int cmd_gen(const std::optional<std::string>& config, const std::string& out,
            std::optional<std::uint64_t> seed) {
  Config cfg = load(config);
  TaskSpec spec = cfg.grid.task;
  spec.seed = seed.value_or(cfg.grid.seeds.front());
  const Task task = generate_task(spec);
  fs::create_directories(out);
  write_split_csv(out, task.split);
  std::cerr << "wrote task (seed " << spec.seed << ") to " << out << '\n';
  return 0;
}

int cmd_report(const std::string& input, const std::string& out) {
  fs::path runs = input;
  if (fs::is_directory(runs)) runs /= "runs.csv";
  const SummaryTable table = summarize(read_runs_csv(runs));
  fs::create_directories(out);
  std::ofstream csv(fs::path(out) / "summary.csv", std::ios::binary);
  write_summary_csv(csv, table);
  std::ofstream(fs::path(out) / "summary.json", std::ios::binary) << summary_json(table).dump(2) << '\n';
  write_summary_csv(std::cout, table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"f-divergence weak-to-strong generalization experiments"};
  app.require_subcommand(1);

  std::optional<std::string> config;
  std::string out = "results";
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::vector<std::string> suites;
  std::string input;

  auto* run = app.add_subcommand("run", "execute the loss x noise x seed grid");
  run->add_option("--config", config, "YAML config file")->check(CLI::ExistingFile);
  run->add_option("--out", out, "output directory")->capture_default_str();
  run->add_option("--workers", workers, "worker threads (overrides run.workers)");
  run->add_option("--seed", seed, "run a single seed instead of grid.seeds");

  auto* verify = app.add_subcommand("verify", "run property-verification suites");
  verify->add_option("--config", config, "YAML config file")->check(CLI::ExistingFile);
  verify->add_option("--out", out, "directory for verify.json")->capture_default_str();
  verify->add_option("--suite", suites, "suite to run (repeatable); default from config");
  verify->add_option("--trials", trials, "random trials for pinsker and bound");
  verify->add_option("--seed", seed, "verification seed");

  auto* gen = app.add_subcommand("gen", "write a synthetic task to CSV");
  gen->add_option("--config", config, "YAML config file")->check(CLI::ExistingFile);
  gen->add_option("--out", out, "output directory")->capture_default_str();
  gen->add_option("--seed", seed, "task seed (default: first grid seed)");

  auto* report = app.add_subcommand("report", "pivot an existing runs.csv");
  report->add_option("input", input, "runs.csv or a directory containing it")->required();
  report->add_option("--out", out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*run) return cmd_run(config, out, workers, seed);
    if (*verify) return cmd_verify(config, out, suites, trials, seed);
    if (*gen) return cmd_gen(config, out, seed);
    if (*report) return cmd_report(input, out);
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitUsage;
}
