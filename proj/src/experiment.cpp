#include "fdw2s/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <yaml-cpp/yaml.h>

#include "fdw2s/errors.hpp"
#include "fdw2s/theory.hpp"

namespace fdw2s {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// ---------------------------------------------------------------------------
// Configuration

ExperimentGrid ExperimentGrid::defaults() {
  ExperimentGrid g;
  for (auto k : kTrainableKinds) g.losses.push_back(TrainLoss::of(k));
  g.noise_levels = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  g.seeds = {1, 2, 3, 4, 5};
  return g;
}

void ExperimentGrid::validate() const {
  task.validate();
  train.validate();
  if (losses.empty()) throw ConfigError("grid.losses must not be empty");
  if (seeds.empty()) throw ConfigError("grid.seeds must not be empty");
  if (noise_levels.empty()) throw ConfigError("grid.noise_levels must not be empty");
  for (double n : noise_levels)
    if (!(n >= 0.0 && n <= 0.5)) throw ConfigError("grid.noise_levels must lie in [0, 0.5]");
}

namespace {

void check_keys(const YAML::Node& node, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!node) return;
  if (!node.IsMap()) throw ConfigError("config section '" + section + "' must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError("unknown config key '" + section + "." + key + "'");
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& section) {
  if (!node || !node[key]) return;
  try {
    out = node[key].as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("config key '" + section + "." + key + "' has the wrong type");
  }
}

}  // namespace

Config parse_config(const std::string& yaml_text) {
  Config cfg;
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  if (!root || root.IsNull()) {
    cfg.grid.validate();
    return cfg;
  }
  if (!root.IsMap()) throw ConfigError("config root must be a mapping");
  check_keys(root, "", {"task", "train", "grid", "run", "verify"});

  auto& g = cfg.grid;
  const auto task = root["task"];
  check_keys(task, "task", {"input_dim", "teacher", "samples_per_split"});
  read(task, "input_dim", g.task.input_dim, "task");
  read(task, "samples_per_split", g.task.samples_per_split, "task");
  if (task && task["teacher"]) {
    const auto name = task["teacher"].as<std::string>();
    const auto t = parse_teacher(name);
    if (!t) throw ConfigError("unknown teacher nonlinearity '" + name + "'");
    g.task.teacher = *t;
  }

  const auto train = root["train"];
  check_keys(train, "train",
             {"learning_rate", "batch_size", "epochs", "aux", "beta_final", "warmup_fraction",
              "threshold", "clamp_eps", "strong_width", "activation", "train_backbone"});
  auto& t = g.train;
  read(train, "learning_rate", t.learning_rate, "train");
  read(train, "batch_size", t.batch_size, "train");
  read(train, "epochs", t.epochs, "train");
  read(train, "aux", t.aux_enabled, "train");
  read(train, "beta_final", t.beta_final, "train");
  read(train, "warmup_fraction", t.warmup_fraction, "train");
  read(train, "threshold", t.threshold, "train");
  read(train, "clamp_eps", t.clamp_eps, "train");
  read(train, "strong_width", t.strong_width, "train");
  read(train, "train_backbone", t.train_backbone, "train");
  if (train && train["activation"]) {
    const auto name = train["activation"].as<std::string>();
    const auto a = parse_activation(name);
    if (!a) throw ConfigError("unknown activation '" + name + "'");
    t.strong_activation = *a;
  }

  const auto grid = root["grid"];
  check_keys(grid, "grid", {"losses", "noise_levels", "seeds"});
  if (grid && grid["losses"]) {
    std::vector<std::string> names;
    read(grid, "losses", names, "grid");
    g.losses.clear();
    for (const auto& n : names) {
      const auto l = parse_loss(n);
      if (!l) throw ConfigError("unknown or untrainable loss '" + n + "'");
      g.losses.push_back(*l);
    }
  }
  read(grid, "noise_levels", g.noise_levels, "grid");
  read(grid, "seeds", g.seeds, "grid");

  const auto run = root["run"];
  check_keys(run, "run", {"workers"});
  read(run, "workers", cfg.workers, "run");
  if (cfg.workers == 0) throw ConfigError("run.workers must be positive");

  const auto verify = root["verify"];
  check_keys(verify, "verify", {"suites", "trials", "seed"});
  read(verify, "suites", cfg.verify.suites, "verify");
  read(verify, "trials", cfg.verify.trials, "verify");
  read(verify, "seed", cfg.verify.seed, "verify");

  g.validate();
  return cfg;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Grid execution

const std::vector<std::string>& run_columns() {
  static const std::vector<std::string> cols = {
      "loss",           "noise_level",    "seed",
      "aux",            "beta_final",     "warmup_fraction",
      "threshold",      "learning_rate",  "batch_size",
      "epochs",         "clamp_eps",      "strong_width",
      "activation",     "train_backbone", "weak_test_accuracy",
      "strong_test_accuracy", "disagreement_kind", "r_strong_truth",
      "r_weak_truth",   "r_strong_weak",  "n_test",
      "bound_lhs",      "bound_rhs",      "bound_residual",
      "bound_ok"};
  return cols;
}

std::vector<std::string> run_row(const RunResult& r) {
  const auto& c = r.config;
  return {c.loss.name(),
          format_number(r.noise_level),
          std::to_string(r.seed),
          c.aux_enabled ? "true" : "false",
          format_number(c.beta_final),
          format_number(c.warmup_fraction),
          format_number(c.threshold),
          format_number(c.learning_rate),
          std::to_string(c.batch_size),
          std::to_string(c.epochs),
          format_number(c.clamp_eps),
          std::to_string(c.strong_width),
          std::string(to_string(c.strong_activation)),
          c.train_backbone ? "true" : "false",
          format_number(r.weak_test_accuracy),
          format_number(r.strong_test_accuracy),
          std::string(to_string(r.strong_vs_truth.kind)),
          format_number(r.strong_vs_truth.value),
          format_number(r.weak_vs_truth.value),
          format_number(r.strong_vs_weak.value),
          std::to_string(r.strong_vs_truth.n),
          format_number(r.bound.lhs),
          format_number(r.bound.rhs),
          format_number(r.bound.residual),
          r.bound.residual >= -1e-12 ? "true" : "false"};
}

GridOutcome run_grid_cells(const ExperimentGrid& grid, std::size_t workers) {
  grid.validate();
  workers = std::max<std::size_t>(workers, 1);

  struct SeedContext {
    Task task;
    ModelPredictor teacher;
  };
  const std::size_t per_seed = grid.losses.size() * grid.noise_levels.size();
  std::vector<std::optional<RunResult>> results(grid.cells());
  std::vector<std::optional<CellFailure>> failures(grid.cells());

  for (std::uint64_t seed : grid.seeds) {
    const std::size_t seed_idx =
        static_cast<std::size_t>(std::find(grid.seeds.begin(), grid.seeds.end(), seed) - grid.seeds.begin());
    std::optional<SeedContext> ctx;
    std::string setup_error;
    try {
      TaskSpec ts = grid.task;
      ts.seed = seed;
      TrainConfig tc = grid.train;
      tc.seed = seed;
      Task task = generate_task(ts);
      ModelPredictor teacher = train_weak(task.split, tc);
      ctx.emplace(SeedContext{std::move(task), std::move(teacher)});
    } catch (const std::exception& e) {
      setup_error = e.what();
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < per_seed; i = next++) {
        const std::size_t noise_idx = i / grid.losses.size();
        const std::size_t loss_idx = i % grid.losses.size();
        const std::size_t cell = seed_idx * per_seed + i;
        const auto& loss = grid.losses[loss_idx];
        const double noise = grid.noise_levels[noise_idx];
        if (!ctx) {
          failures[cell] = CellFailure{loss.name(), noise, seed, "task setup failed: " + setup_error};
          continue;
        }
        try {
          TrainConfig tc = grid.train;
          tc.loss = loss;
          tc.seed = seed;
          results[cell] = run_student(ctx->task.split, ctx->teacher, tc, noise);
        } catch (const std::exception& e) {
          failures[cell] = CellFailure{loss.name(), noise, seed, e.what()};
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
  }

  GridOutcome out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i]) {
      if (results[i]->bound.residual < -1e-12) ++out.bound_violations;
      out.runs.push_back(std::move(*results[i]));
    }
    if (failures[i]) out.failures.push_back(std::move(*failures[i]));
  }
  return out;
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_csv_line(std::ostream& os, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << csv_escape(cells[i]);
  os << "\r\n";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

template <typename Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("cannot open " + path.string() + " for writing");
  fn(os);
}

}  // namespace

void write_runs_csv(std::ostream& os, const std::vector<RunResult>& runs) {
  write_csv_line(os, run_columns());
  for (const auto& r : runs) write_csv_line(os, run_row(r));
}

nlohmann::ordered_json runs_json(const std::vector<RunResult>& runs) {
  auto arr = nlohmann::ordered_json::array();
  const auto& cols = run_columns();
  for (const auto& r : runs) {
    const auto row = run_row(r);
    nlohmann::ordered_json obj;
    for (std::size_t i = 0; i < cols.size(); ++i) obj[cols[i]] = row[i];
    arr.push_back(std::move(obj));
  }
  return arr;
}

RunRow to_row(const RunResult& r) {
  return {r.config.loss.name(), r.noise_level, r.seed, r.weak_test_accuracy,
          r.strong_test_accuracy};
}

SummaryTable summarize(const std::vector<RunRow>& rows) {
  SummaryTable t;
  std::set<double> noise;
  for (const auto& r : rows) {
    if (std::find(t.losses.begin(), t.losses.end(), r.loss) == t.losses.end())
      t.losses.push_back(r.loss);
    noise.insert(r.noise_level);
  }
  t.noise_levels.assign(noise.begin(), noise.end());
  t.strong_accuracy.assign(t.losses.size(), std::vector<double>(t.noise_levels.size()));
  t.weak_accuracy.resize(t.noise_levels.size());
  for (std::size_t j = 0; j < t.noise_levels.size(); ++j) {
    std::map<std::uint64_t, double> weak_by_seed;
    for (std::size_t i = 0; i < t.losses.size(); ++i) {
      std::vector<double> vals;
      for (const auto& r : rows)
        if (r.loss == t.losses[i] && r.noise_level == t.noise_levels[j]) {
          vals.push_back(r.strong_test_accuracy);
          weak_by_seed[r.seed] = r.weak_test_accuracy;
        }
      t.strong_accuracy[i][j] = median(std::move(vals));
    }
    std::vector<double> weak;
    for (const auto& [seed, acc] : weak_by_seed) weak.push_back(acc);
    t.weak_accuracy[j] = median(std::move(weak));
  }
  return t;
}

double SummaryTable::at(const std::string& loss, double noise) const {
  const auto li = std::find(losses.begin(), losses.end(), loss);
  if (li == losses.end()) throw InvalidInput("summary has no loss '" + loss + "'");
  for (std::size_t j = 0; j < noise_levels.size(); ++j)
    if (std::abs(noise_levels[j] - noise) < 1e-12)
      return strong_accuracy[static_cast<std::size_t>(li - losses.begin())][j];
  throw InvalidInput("summary has no noise level " + format_number(noise));
}

void write_summary_csv(std::ostream& os, const SummaryTable& table) {
  std::vector<std::string> header = {"loss"};
  for (double n : table.noise_levels) header.push_back("noise_" + format_number(n));
  write_csv_line(os, header);
  for (std::size_t i = 0; i < table.losses.size(); ++i) {
    std::vector<std::string> row = {table.losses[i]};
    for (double v : table.strong_accuracy[i]) row.push_back(format_number(v));
    write_csv_line(os, row);
  }
  std::vector<std::string> weak = {"weak-teacher"};
  for (double v : table.weak_accuracy) weak.push_back(format_number(v));
  write_csv_line(os, weak);
}

nlohmann::ordered_json summary_json(const SummaryTable& table) {
  nlohmann::ordered_json j;
  j["metric"] = "median strong_test_accuracy over seeds";
  j["noise_levels"] = table.noise_levels;
  auto rows = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < table.losses.size(); ++i) rows[table.losses[i]] = table.strong_accuracy[i];
  j["strong_accuracy"] = rows;
  j["weak_teacher_accuracy"] = table.weak_accuracy;
  return j;
}

std::vector<RunRow> read_runs_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open " + path.string());
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(is, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line()) throw InvalidInput(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InvalidInput(path.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_loss = col("loss"), c_noise = col("noise_level"), c_seed = col("seed"),
                    c_weak = col("weak_test_accuracy"), c_strong = col("strong_test_accuracy");
  std::vector<RunRow> rows;
  while (next_line()) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw InvalidInput(path.string() + ": ragged row");
    try {
      rows.push_back({cells[c_loss], std::stod(cells[c_noise]), std::stoull(cells[c_seed]),
                      std::stod(cells[c_weak]), std::stod(cells[c_strong])});
    } catch (const std::logic_error&) {
      throw InvalidInput(path.string() + ": malformed number in row " + std::to_string(rows.size() + 2));
    }
  }
  return rows;
}

GridOutcome run_grid(const ExperimentGrid& grid, const std::filesystem::path& out_dir,
                     std::size_t workers) {
  std::filesystem::create_directories(out_dir);
  GridOutcome out = run_grid_cells(grid, workers);
  write_file(out_dir / "runs.csv", [&](std::ostream& os) { write_runs_csv(os, out.runs); });
  write_file(out_dir / "runs.json",
             [&](std::ostream& os) { os << runs_json(out.runs).dump(2) << '\n'; });
  std::vector<RunRow> rows;
  for (const auto& r : out.runs) rows.push_back(to_row(r));
  const SummaryTable table = summarize(rows);
  write_file(out_dir / "summary.csv", [&](std::ostream& os) { write_summary_csv(os, table); });
  write_file(out_dir / "summary.json",
             [&](std::ostream& os) { os << summary_json(table).dump(2) << '\n'; });
  std::filesystem::remove(out_dir / "failures.json");
  if (!out.failures.empty()) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& f : out.failures)
      arr.push_back({{"loss", f.loss},
                     {"noise_level", f.noise_level},
                     {"seed", f.seed},
                     {"error", f.message}});
    write_file(out_dir / "failures.json", [&](std::ostream& os) { os << arr.dump(2) << '\n'; });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Verification suites

namespace {

ProbVector random_prob(std::mt19937_64& rng, std::size_t k, double concentration) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<double> v(k);
  double s = 0.0;
  for (double& e : v) s += (e = gamma(rng));
  if (!(s > 0.0)) {
    v.assign(k, 1.0);
    s = static_cast<double>(k);
  }
  for (double& e : v) e /= s;
  return clamp(ProbVector(std::move(v)));
}

nlohmann::ordered_json to_json(const ProbVector& p) {
  return std::vector<double>(p.begin(), p.end());
}

// Closed forms of D_f in long double, written without the generator.
long double closed_form(DivergenceKind kind, const ProbVector& p, const ProbVector& q) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const long double a = p[i], b = q[i];
    switch (kind) {
      case DivergenceKind::KL: s += a * std::log(a / b); break;
      case DivergenceKind::ReverseKL: s += b * std::log(b / a); break;
      case DivergenceKind::JensenShannon: {
        const long double m = 0.5L * (a + b);
        s += 0.5L * a * std::log(a / m) + 0.5L * b * std::log(b / m);
        break;
      }
      case DivergenceKind::Jeffreys: s += (a - b) * std::log(a / b); break;
      case DivergenceKind::SquaredHellinger: {
        const long double d = std::sqrt(a) - std::sqrt(b);
        s += 0.5L * d * d;  // half the table form; matches the 1 - sqrt(x) generator
        break;
      }
      case DivergenceKind::PearsonChi2: s += (a - b) * (a - b) / b; break;
      case DivergenceKind::TotalVariation: s += 0.5L * std::abs(a - b); break;
    }
  }
  return s;
}

struct Tracker {
  CheckResult r;
  Tracker(std::string name, double tol) {
    r.name = std::move(name);
    r.tolerance = tol;
  }
  // Larger-is-worse error; fails when err > tolerance.
  void error(double err, const std::function<nlohmann::ordered_json()>& witness) {
    ++r.cases;
    if (!(err <= r.tolerance) && r.passed) {
      r.passed = false;
      r.witness = witness();
    }
    if (!(err <= r.worst)) r.worst = std::isnan(err) ? err : std::max(r.worst, err);
  }
};

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

double max_rel_vec_err(const std::vector<double>& a, const std::vector<double>& b) {
  double scale = 1e-6, err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    err = std::max(err, std::abs(a[i] - b[i]));
  }
  return err / scale;
}

template <typename Fn>
std::vector<double> central_difference(std::vector<double> x, double h, Fn&& f) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = f(x);
    x[i] = x0 - h;
    const double down = f(x);
    x[i] = x0;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

bool VerifyReport::passed() const {
  return std::all_of(suites.begin(), suites.end(), [](const SuiteReport& s) { return s.passed(); });
}

nlohmann::ordered_json VerifyReport::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["trials"] = trials;
  j["passed"] = passed();
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : suites) {
    nlohmann::ordered_json sj;
    sj["suite"] = s.name;
    sj["passed"] = s.passed();
    auto checks = nlohmann::ordered_json::array();
    for (const auto& c : s.checks)
      checks.push_back({{"check", c.name},
                        {"passed", c.passed},
                        {"cases", c.cases},
                        {"worst", c.worst},
                        {"tolerance", c.tolerance},
                        {"witness", c.witness}});
    sj["checks"] = std::move(checks);
    arr.push_back(std::move(sj));
  }
  j["suites"] = std::move(arr);
  return j;
}

SuiteReport verify_divergence_suite(std::size_t pairs_per_kind, std::uint64_t seed) {
  SuiteReport rep{"divergence", {}};
  std::mt19937_64 rng(seed ^ 0xD1B54A32D192ED03ULL);
  std::uniform_int_distribution<std::size_t> dim(2, 10);
  constexpr double conc[] = {0.1, 1.0, 10.0};

  for (auto kind : kAllKinds) {
    Tracker oracle("oracle:" + std::string(to_string(kind)), 1e-10);
    Tracker nonneg("nonnegative:" + std::string(to_string(kind)), 0.0);
    for (std::size_t i = 0; i < pairs_per_kind; ++i) {
      const std::size_t k = dim(rng);
      const ProbVector p = random_prob(rng, k, conc[i % 3]);
      const ProbVector q = random_prob(rng, k, conc[(i + 1) % 3]);
      const double got = divergence(kind, p, q);
      const auto want = static_cast<double>(closed_form(kind, p, q));
      auto witness = [&] {
        return nlohmann::ordered_json{{"p", to_json(p)}, {"q", to_json(q)}, {"got", got}, {"want", want}};
      };
      oracle.error(rel_err(got, want), witness);
      nonneg.error(got < 0.0 ? -got : 0.0, witness);
    }
    rep.checks.push_back(oracle.r);
    rep.checks.push_back(nonneg.r);
  }

  Tracker jeffreys("jeffreys=kl+rkl", 1e-12), rkl("rkl(p,q)=kl(q,p)", 1e-12),
      js("js_generator=mixture", 1e-12), sym("js_tv_symmetric", 1e-12),
      bounded("js<=ln2,hellinger<=1,tv<=1", 0.0);
  for (std::size_t i = 0; i < pairs_per_kind; ++i) {
    const std::size_t k = dim(rng);
    const ProbVector p = random_prob(rng, k, conc[i % 3]);
    const ProbVector q = random_prob(rng, k, conc[(i + 2) % 3]);
    auto witness = [&] { return nlohmann::ordered_json{{"p", to_json(p)}, {"q", to_json(q)}}; };
    const double kl = divergence(DivergenceKind::KL, p, q);
    const double r = divergence(DivergenceKind::ReverseKL, p, q);
    jeffreys.error(rel_err(divergence(DivergenceKind::Jeffreys, p, q), kl + r), witness);
    rkl.error(rel_err(r, divergence(DivergenceKind::KL, q, p)), witness);
    std::vector<double> mv(k);
    for (std::size_t j = 0; j < k; ++j) mv[j] = 0.5 * (p[j] + q[j]);
    const ProbVector m(mv);
    const double mixture =
        0.5 * divergence(DivergenceKind::KL, p, m) + 0.5 * divergence(DivergenceKind::KL, q, m);
    js.error(rel_err(divergence(DivergenceKind::JensenShannon, p, q), mixture), witness);
    for (auto kind : {DivergenceKind::JensenShannon, DivergenceKind::TotalVariation})
      sym.error(rel_err(divergence(kind, p, q), divergence(kind, q, p)), witness);
    const double over = std::max({divergence(DivergenceKind::JensenShannon, p, q) - std::numbers::ln2,
                                  divergence(DivergenceKind::SquaredHellinger, p, q) - 1.0,
                                  divergence(DivergenceKind::TotalVariation, p, q) - 1.0, 0.0});
    bounded.error(over, witness);
  }
  for (auto* t : {&jeffreys, &rkl, &js, &sym, &bounded}) rep.checks.push_back(t->r);
  return rep;
}

SuiteReport verify_gradient_suite(std::size_t cases_per_kind, std::uint64_t seed) {
  SuiteReport rep{"gradients", {}};
  std::mt19937_64 rng(seed ^ 0x94D049BB133111EBULL);
  std::uniform_int_distribution<std::size_t> dim(2, 6);
  std::normal_distribution<double> n01(0.0, 1.0);
  constexpr double h = 1e-5;
  constexpr double tol = 1e-4;

  for (auto kind : kTrainableKinds) {
    const std::string kn(to_string(kind));
    Tracker p_slot("logits_p_slot:" + kn, tol), q_slot("logits_q_slot:" + kn, tol),
        head("head:" + kn, tol), backbone("backbone:" + kn, tol);
    for (std::size_t c = 0; c < cases_per_kind; ++c) {
      const std::size_t k = dim(rng);
      std::vector<double> z(k);
      for (double& e : z) e = 1.5 * n01(rng);
      const ProbVector other = random_prob(rng, k, 1.0);

      const auto analytic = divergence_gradient(kind, z, other);
      const auto numeric = central_difference(
          z, h, [&](const std::vector<double>& zz) { return divergence(kind, softmax(zz), other); });
      p_slot.error(max_rel_vec_err(analytic, numeric), [&] {
        return nlohmann::ordered_json{{"logits", z}, {"q", to_json(other)}};
      });

      const auto analytic_q = reference_gradient(kind, other, softmax(z));
      const auto numeric_q = central_difference(
          z, h, [&](const std::vector<double>& zz) { return divergence(kind, other, softmax(zz)); });
      q_slot.error(max_rel_vec_err(analytic_q, numeric_q), [&] {
        return nlohmann::ordered_json{{"logits", z}, {"p", to_json(other)}};
      });
    }

    // Head (and backbone) gradients on small random models.
    for (std::size_t c = 0; c < cases_per_kind; ++c) {
      const std::size_t d = 4;
      ModelPredictor m = (c % 2 == 0)
                             ? make_linear_model(d)
                             : make_feature_model(FrozenBackbone::random(d, 6, Activation::Tanh, rng()));
      for (double& w : m.head.weights) w = 0.5 * n01(rng);
      for (double& b : m.head.bias) b = 0.5 * n01(rng);
      if (m.backbone)
        for (double& b : m.backbone->bias) b = 0.3 * n01(rng);
      std::vector<std::vector<double>> xs(4, std::vector<double>(d));
      std::vector<ProbVector> ts;
      for (auto& x : xs) {
        for (double& e : x) e = n01(rng);
        ts.push_back(random_prob(rng, 2, 1.0));
      }
      std::vector<Example> batch;
      for (std::size_t i = 0; i < xs.size(); ++i) batch.push_back({xs[i], &ts[i]});
      const bool bb = m.backbone.has_value();
      const auto lg = loss_and_gradient(m, batch, kind, bb);

      auto loss_with = [&](auto setter) {
        return [&, setter](const std::vector<double>& params) {
          ModelPredictor mm = m;
          setter(mm, params);
          return loss_and_gradient(mm, batch, kind).loss;
        };
      };
      const auto num_w = central_difference(
          m.head.weights, h,
          loss_with([](ModelPredictor& mm, const std::vector<double>& v) { mm.head.weights = v; }));
      const auto num_b = central_difference(
          m.head.bias, h,
          loss_with([](ModelPredictor& mm, const std::vector<double>& v) { mm.head.bias = v; }));
      std::vector<double> a = lg.gradient.head_weights, n = num_w;
      a.insert(a.end(), lg.gradient.head_bias.begin(), lg.gradient.head_bias.end());
      n.insert(n.end(), num_b.begin(), num_b.end());
      head.error(max_rel_vec_err(a, n), [&] { return nlohmann::ordered_json{{"case", c}}; });

      if (bb) {
        const auto num_p = central_difference(
            m.backbone->projection, h, loss_with([](ModelPredictor& mm, const std::vector<double>& v) {
              mm.backbone->projection = v;
            }));
        backbone.error(max_rel_vec_err(lg.gradient.backbone_projection, num_p),
                       [&] { return nlohmann::ordered_json{{"case", c}}; });
      }
    }
    for (auto* t : {&p_slot, &q_slot, &head, &backbone}) rep.checks.push_back(t->r);
  }

  // Auxiliary confidence loss, for CE and every trainable divergence.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<TrainLoss> losses = {TrainLoss::cross_entropy()};
  for (auto k : kTrainableKinds) losses.push_back(TrainLoss::of(k));
  for (const auto& loss : losses) {
    Tracker aux("aux_loss:" + loss.name(), tol);
    for (std::size_t accepted = 0; accepted < cases_per_kind;) {
      std::vector<double> z = {1.5 * n01(rng), 1.5 * n01(rng)};
      const double t = 0.2 + 0.6 * unit(rng);
      const double beta = unit(rng);
      const ProbVector weak = random_prob(rng, 2, 1.0);
      const ProbVector pred = clamp(softmax(z));
      if (std::abs(pred[1] - t) < 1e-3) continue;  // FD would cross the hardening threshold
      ++accepted;
      const auto a = aux_loss(loss, weak, pred, t, beta);
      const auto n = central_difference(z, h, [&](const std::vector<double>& zz) {
        return aux_loss(loss, weak, clamp(softmax(zz)), t, beta).loss;
      });
      aux.error(max_rel_vec_err(a.logit_gradient, n), [&] {
        return nlohmann::ordered_json{{"loss", loss.name()}, {"logits", z}, {"t", t}, {"beta", beta}};
      });
    }
    rep.checks.push_back(aux.r);
  }
  return rep;
}

SuiteReport verify_pinsker_suite(std::size_t trials, std::uint64_t seed) {
  SuiteReport rep{"pinsker", {}};
  for (auto kind : kTrainableKinds) {
    const auto r = theory::verify_pinsker(kind, trials, seed);
    CheckResult c;
    c.name = "tv<=c*sqrt(D):" + std::string(to_string(kind));
    c.cases = r.trials;
    c.worst = r.max_ratio;
    c.tolerance = r.constant;
    c.passed = r.violations.empty();
    if (!c.passed) {
      const auto& w = r.violations.front();
      c.witness = {{"p", to_json(w.p)}, {"q", to_json(w.q)}, {"tv", w.tv}, {"bound", w.bound},
                   {"violations", r.violations.size()}};
    }
    rep.checks.push_back(std::move(c));
  }
  return rep;
}

SuiteReport verify_bound_suite(std::size_t trials, std::uint64_t seed) {
  SuiteReport rep{"bound", {}};
  std::mt19937_64 rng(seed ^ 0xBF58476D1CE4E5B9ULL);
  std::uniform_int_distribution<std::size_t> dim(2, 10);
  constexpr double conc[] = {0.1, 1.0, 10.0};
  constexpr std::size_t kListLength = 1;
  for (auto kind : kTrainableKinds) {
    CheckResult c;
    c.name = "risk_gap<=2sup|f'|E[TV]:" + std::string(to_string(kind));
    c.tolerance = 1e-12;
    c.worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < trials; ++i) {
      const std::size_t k = dim(rng);
      std::vector<ProbVector> s, w, y;
      for (std::size_t j = 0; j < kListLength; ++j) {
        s.push_back(random_prob(rng, k, conc[(i + j) % 3]));
        w.push_back(random_prob(rng, k, conc[(i + j + 1) % 3]));
        y.push_back(random_prob(rng, k, conc[(i + j + 2) % 3]));
      }
      const auto b = theory::check_limit_inequality(s, w, y, kind);
      ++c.cases;
      c.worst = std::min(c.worst, b.residual);
      if (b.residual < -c.tolerance && c.passed) {
        c.passed = false;
        c.witness = {{"lhs", b.lhs}, {"rhs", b.rhs}, {"trial", i}};
      }
    }
    rep.checks.push_back(std::move(c));
  }
  return rep;
}

SuiteReport verify_equivalence_suite(std::size_t cases_per_cell, std::uint64_t seed) {
  SuiteReport rep{"equivalence", {}};
  std::mt19937_64 rng(seed ^ 0xE7037ED1A0B428DBULL);
  // Losses in [0, 0.1] keep alpha * spread <= 1, where the chi^2 tilted
  // solution stays strictly positive for every alpha in the grid.
  std::uniform_real_distribution<double> loss_dist(0.0, 0.1);
  constexpr DivergenceKind kinds[] = {DivergenceKind::KL, DivergenceKind::ReverseKL,
                                      DivergenceKind::PearsonChi2, DivergenceKind::SquaredHellinger};
  constexpr double alphas[] = {0.1, 1.0, 10.0};

  Tracker match("f1_tilted=f2_tilted(v)", 1e-6), gibbs("kl_tilted=gibbs", 1e-10),
      norm("normalization_residual", 1e-10);
  for (auto f1 : kinds)
    for (auto f2 : kinds)
      for (double alpha : alphas)
        for (std::size_t c = 0; c < cases_per_cell; ++c) {
          const std::vector<double> L = {loss_dist(rng), loss_dist(rng)};
          const ProbVector Q = random_prob(rng, 2, 1.0);
          auto witness = [&] {
            return nlohmann::ordered_json{{"f1", to_string(f1)}, {"f2", to_string(f2)},
                                          {"alpha", alpha}, {"L", L}, {"Q", to_json(Q)}};
          };
          try {
            const auto t1 = theory::tilted_distribution(f1, alpha, L, Q);
            const auto v = theory::transform_regularizer(f1, f2, alpha, L, Q);
            const auto t2 = theory::tilted_distribution(f2, alpha, v.values, Q);
            double diff = 0.0;
            for (std::size_t j = 0; j < 2; ++j) diff = std::max(diff, std::abs(t1.tilted[j] - t2.tilted[j]));
            match.error(diff, witness);
            norm.error(std::max(std::abs(t1.constraint_residual), std::abs(t2.constraint_residual)),
                       witness);
            if (f1 == DivergenceKind::KL && f2 == DivergenceKind::KL) {
              std::vector<double> g(2);
              for (std::size_t j = 0; j < 2; ++j) g[j] = Q[j] * std::exp(-alpha * L[j]);
              const double z = g[0] + g[1];
              double gd = 0.0;
              for (std::size_t j = 0; j < 2; ++j) gd = std::max(gd, std::abs(t1.tilted[j] - g[j] / z));
              gibbs.error(gd, witness);
            }
          } catch (const Error& e) {
            match.error(std::numeric_limits<double>::infinity(), [&] {
              auto w = witness();
              w["error"] = e.what();
              return w;
            });
          }
        }
  for (auto* t : {&match, &gibbs, &norm}) rep.checks.push_back(t->r);
  return rep;
}

VerifyReport run_verify(const VerifyOptions& opts) {
  if (opts.suites.empty()) throw ConfigError("verify: no suites selected");
  for (const auto& s : opts.suites)
    if (std::find(kSuiteNames.begin(), kSuiteNames.end(), s) == kSuiteNames.end())
      throw ConfigError("verify: unknown suite '" + s + "'");
  if (opts.trials == 0) throw ConfigError("verify: trials must be positive");

  VerifyReport rep{opts.seed, opts.trials, {}};
  for (const auto& s : opts.suites) {
    if (s == "divergence") rep.suites.push_back(verify_divergence_suite(1000, opts.seed));
    if (s == "gradients") rep.suites.push_back(verify_gradient_suite(100, opts.seed));
    if (s == "pinsker") rep.suites.push_back(verify_pinsker_suite(opts.trials, opts.seed));
    if (s == "bound") rep.suites.push_back(verify_bound_suite(opts.trials, opts.seed));
    if (s == "equivalence") rep.suites.push_back(verify_equivalence_suite(100, opts.seed));
  }
  return rep;
}

}  // namespace fdw2s
