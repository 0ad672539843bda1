#include "fdw2s/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "fdw2s/errors.hpp"

namespace fdw2s {

namespace {

constexpr std::size_t kCalibrationSamples = 20000;
// Fraction of soft labels that should land in (0.25, 0.75).
constexpr double kAmbiguousFraction = 0.20;
// Weight of the nonlinear term relative to the linear one (in score std-devs).
constexpr double kNonlinearWeight = 1.0;

std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> v(d);
  for (double& e : v) e = n01(rng);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace

std::string_view to_string(TeacherNonlinearity t) {
  switch (t) {
    case TeacherNonlinearity::QuadraticFeatures: return "quadratic-features";
    case TeacherNonlinearity::SignProduct: return "sign-product";
    case TeacherNonlinearity::Radial: return "radial";
  }
  return "?";
}

std::optional<TeacherNonlinearity> parse_teacher(std::string_view name) {
  for (auto t : {TeacherNonlinearity::QuadraticFeatures, TeacherNonlinearity::SignProduct,
                 TeacherNonlinearity::Radial})
    if (name == to_string(t)) return t;
  return std::nullopt;
}

void TaskSpec::validate() const {
  if (input_dim == 0) throw ConfigError("task.input_dim must be positive");
  if (teacher == TeacherNonlinearity::SignProduct && input_dim < 2)
    throw ConfigError("sign-product teacher needs input_dim >= 2");
  if (samples_per_split == 0 || samples_per_split % 2 != 0)
    throw ConfigError("task.samples_per_split must be positive and even");
}

Teacher::Teacher(TeacherNonlinearity kind, std::vector<double> linear,
                 std::vector<double> nonlinear, double offset, double scale)
    : kind_(kind),
      linear_(std::move(linear)),
      nonlinear_(std::move(nonlinear)),
      offset_(offset),
      scale_(scale) {}

double Teacher::raw_score(std::span<const double> x) const {
  if (x.size() != linear_.size()) throw ShapeError("teacher: feature dimension mismatch");
  const double lin = dot(linear_, x);
  const double d = static_cast<double>(x.size());
  switch (kind_) {
    case TeacherNonlinearity::QuadraticFeatures: {
      // v . (x * x); centered so it has zero mean under N(0, I)
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) s += nonlinear_[i] * (x[i] * x[i] - 1.0);
      return lin + s;
    }
    case TeacherNonlinearity::SignProduct:
      return lin + nonlinear_[0] * ((x[0] * x[1] > 0.0) ? 1.0 : -1.0);
    case TeacherNonlinearity::Radial:
      return lin + nonlinear_[0] * (dot(x, x) - d) / std::sqrt(2.0 * d);
  }
  return lin;
}

double Teacher::score(std::span<const double> x) const {
  return scale_ * (raw_score(x) - offset_);
}

ProbVector Teacher::operator()(std::span<const double> x) const {
  const double s = score(x);
  const double p1 = 1.0 / (1.0 + std::exp(-s));
  return ProbVector::binary(p1);
}

Task generate_task(const TaskSpec& spec) {
  spec.validate();
  const std::size_t d = spec.input_dim;
  std::mt19937_64 teacher_rng(spec.seed ^ 0x9E3779B97F4A7C15ULL);

  // Linear part has unit score std-dev; the nonlinear part is scaled to
  // kNonlinearWeight std-devs.
  std::vector<double> w = normal_vector(teacher_rng, d);
  const double wn = norm(w);
  for (double& e : w) e /= wn;
  std::vector<double> v;
  switch (spec.teacher) {
    case TeacherNonlinearity::QuadraticFeatures: {
      v = normal_vector(teacher_rng, d);
      const double vn = norm(v) * std::sqrt(2.0);  // Var(x^2 - 1) = 2
      for (double& e : v) e *= kNonlinearWeight / vn;
      break;
    }
    case TeacherNonlinearity::SignProduct:
    case TeacherNonlinearity::Radial:
      v = {kNonlinearWeight};
      break;
  }

  Teacher provisional(spec.teacher, w, v, 0.0, 1.0);
  std::vector<double> raw(kCalibrationSamples);
  std::mt19937_64 calib_rng(spec.seed ^ 0xC2B2AE3D27D4EB4FULL);
  for (double& r : raw) r = provisional.score(normal_vector(calib_rng, d));
  std::vector<double> sorted = raw;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double offset = sorted[sorted.size() / 2];
  for (double& r : raw) r = std::abs(r - offset);
  const auto q_idx = static_cast<std::size_t>(kAmbiguousFraction * static_cast<double>(raw.size()));
  std::nth_element(raw.begin(), raw.begin() + q_idx, raw.end());
  // |score| < ln 3  <=>  sigmoid(score) in (0.25, 0.75)
  const double scale = std::log(3.0) / raw[q_idx];

  Teacher teacher(spec.teacher, std::move(w), std::move(v), offset, scale);

  const std::size_t per_class = 3 * spec.samples_per_split / 2;
  std::vector<Sample> buckets[2];
  buckets[0].reserve(per_class);
  buckets[1].reserve(per_class);
  std::mt19937_64 data_rng(spec.seed);
  while (buckets[0].size() < per_class || buckets[1].size() < per_class) {
    auto x = normal_vector(data_rng, d);
    ProbVector y = teacher(x);
    const std::size_t cls = y[1] > 0.5 ? 1 : 0;
    if (buckets[cls].size() < per_class) buckets[cls].push_back({std::move(x), std::move(y)});
  }

  const std::size_t half = spec.samples_per_split / 2;
  DataSplit split;
  std::vector<Sample>* parts[3] = {&split.ground_truth, &split.weak_supervision, &split.test};
  for (std::size_t s = 0; s < 3; ++s) {
    auto& part = *parts[s];
    part.reserve(spec.samples_per_split);
    for (auto& bucket : buckets)
      for (std::size_t i = s * half; i < (s + 1) * half; ++i) part.push_back(std::move(bucket[i]));
    std::shuffle(part.begin(), part.end(), data_rng);
  }
  return Task{std::move(split), std::move(teacher)};
}

ProbVector flip(const ProbVector& y) {
  if (y.size() != 2) throw UnsupportedOperation("label flip is defined for binary labels only");
  return ProbVector({y[1], y[0]});
}

NoisySupervision inject_noise(std::span<const ProbVector> labels, double level,
                              std::uint64_t seed) {
  if (!(level >= 0.0 && level <= 0.5))
    throw ConfigError("noise level must lie in [0, 0.5], got " + std::to_string(level));
  NoisySupervision out;
  out.noise_level = level;
  out.labels.assign(labels.begin(), labels.end());
  const std::size_t n = labels.size();
  const auto count = static_cast<std::size_t>(std::llround(level * static_cast<double>(n)));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  out.flipped_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(out.flipped_indices.begin(), out.flipped_indices.end());
  for (std::size_t i : out.flipped_indices) out.labels[i] = flip(out.labels[i]);
  return out;
}

std::vector<ProbVector> labels_of(std::span<const Sample> samples) {
  std::vector<ProbVector> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

void write_samples_csv(const std::filesystem::path& path, std::span<const Sample> samples) {
  std::ofstream os(path);
  if (!os) throw InvalidInput("cannot open " + path.string() + " for writing");
  const std::size_t d = samples.empty() ? 0 : samples.front().x.size();
  for (std::size_t i = 0; i < d; ++i) os << 'x' << i << ',';
  os << "y0,y1\n";
  os << std::setprecision(17);
  for (const auto& s : samples) {
    for (double v : s.x) os << v << ',';
    os << s.label[0] << ',' << s.label[1] << '\n';
  }
}

std::vector<Sample> read_samples_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw InvalidInput(path.string() + ": empty file");
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 3) throw InvalidInput(path.string() + ": need at least one feature and two labels");
  std::vector<Sample> out;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw InvalidInput(path.string() + ": bad number on row " + std::to_string(row));
      }
    }
    if (vals.size() != columns)
      throw InvalidInput(path.string() + ": row " + std::to_string(row) + " has " +
                         std::to_string(vals.size()) + " columns, expected " +
                         std::to_string(columns));
    ProbVector y({vals[columns - 2], vals[columns - 1]});
    vals.resize(columns - 2);
    out.push_back({std::move(vals), std::move(y)});
  }
  return out;
}

void write_split_csv(const std::filesystem::path& dir, const DataSplit& split) {
  std::filesystem::create_directories(dir);
  write_samples_csv(dir / "ground_truth.csv", split.ground_truth);
  write_samples_csv(dir / "weak_supervision.csv", split.weak_supervision);
  write_samples_csv(dir / "test.csv", split.test);
}

DataSplit read_split_csv(const std::filesystem::path& dir) {
  return DataSplit{read_samples_csv(dir / "ground_truth.csv"),
                   read_samples_csv(dir / "weak_supervision.csv"),
                   read_samples_csv(dir / "test.csv")};
}

}  // namespace fdw2s
