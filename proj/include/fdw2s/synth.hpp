#pragma once

// Synthetic binary-classification tasks: a seeded nonlinear teacher, three
// equal class-balanced splits, and the complement-flip label-noise protocol.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fdw2s/probdist.hpp"

namespace fdw2s {

enum class TeacherNonlinearity { QuadraticFeatures, SignProduct, Radial };

std::string_view to_string(TeacherNonlinearity t);
std::optional<TeacherNonlinearity> parse_teacher(std::string_view name);

struct TaskSpec {
  std::size_t input_dim = 20;
  TeacherNonlinearity teacher = TeacherNonlinearity::QuadraticFeatures;
  std::size_t samples_per_split = 4000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Sample {
  std::vector<double> x;
  ProbVector label;  // soft label G*(x)
};

struct DataSplit {
  std::vector<Sample> ground_truth;
  std::vector<Sample> weak_supervision;
  std::vector<Sample> test;
};

/// The labeling function G*: sigmoid of a fixed nonlinear score.
class Teacher {
 public:
  Teacher(TeacherNonlinearity kind, std::vector<double> linear, std::vector<double> nonlinear,
          double offset, double scale);

  double score(std::span<const double> x) const;
  ProbVector operator()(std::span<const double> x) const;

  TeacherNonlinearity kind() const { return kind_; }

 private:
  double raw_score(std::span<const double> x) const;

  TeacherNonlinearity kind_;
  std::vector<double> linear_;
  std::vector<double> nonlinear_;
  double offset_;
  double scale_;
};

struct Task {
  DataSplit split;
  Teacher teacher;
};

/// Deterministic in spec.seed. Features are standard normal; the teacher's
/// score is centered at its median and scaled so that about 20% of soft labels
/// fall in (0.25, 0.75). Each split holds samples_per_split points, half per
/// hardened class.
Task generate_task(const TaskSpec& spec);

struct NoisySupervision {
  std::vector<ProbVector> labels;
  double noise_level = 0.0;
  std::vector<std::size_t> flipped_indices;  // ascending
};

/// Swaps (y, 1-y) on exactly round(level * n) indices chosen by a seeded
/// shuffle. Requires binary labels and 0 <= level <= 0.5.
NoisySupervision inject_noise(std::span<const ProbVector> labels, double level, std::uint64_t seed);

/// Complement of a binary label, (y0, y1) -> (y1, y0).
ProbVector flip(const ProbVector& y);

/// Soft labels G*(x) of a split, in order.
std::vector<ProbVector> labels_of(std::span<const Sample> samples);

// CSV layout: header x0..x{d-1},y0,y1 then one row per sample; splits are
// written to ground_truth.csv, weak_supervision.csv and test.csv.
void write_samples_csv(const std::filesystem::path& path, std::span<const Sample> samples);
std::vector<Sample> read_samples_csv(const std::filesystem::path& path);
void write_split_csv(const std::filesystem::path& dir, const DataSplit& split);
DataSplit read_split_csv(const std::filesystem::path& dir);

}  // namespace fdw2s
