#pragma once

// Weak-to-strong pipeline: train a weak teacher on ground truth, pseudo-label
// the weak-supervision split, fit a strong student to those labels under an
// f-divergence loss (optionally with the confidence auxiliary term), and
// evaluate both against the truth.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fdw2s/divergence.hpp"
#include "fdw2s/nnet.hpp"
#include "fdw2s/synth.hpp"
#include "fdw2s/theory.hpp"

namespace fdw2s {

/// Training loss: an f-divergence, or the cross-entropy baseline ("CE").
struct TrainLoss {
  std::optional<DivergenceKind> divergence;  // nullopt: cross-entropy

  static TrainLoss cross_entropy() { return {}; }
  static TrainLoss of(DivergenceKind k) { return {k}; }

  std::string name() const;
  /// Divergence used when reporting disagreements; CE reports KL.
  DivergenceKind reporting_kind() const { return divergence.value_or(DivergenceKind::KL); }

  friend bool operator==(const TrainLoss&, const TrainLoss&) = default;
};

std::optional<TrainLoss> parse_loss(std::string_view name);

struct TrainConfig {
  TrainLoss loss = TrainLoss::of(DivergenceKind::KL);
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::size_t epochs = 1;
  bool aux_enabled = false;
  double beta_final = 0.5;
  double warmup_fraction = 0.5;
  double threshold = 0.5;
  double clamp_eps = kDefaultClampEps;
  std::uint64_t seed = 0;
  std::size_t strong_width = 256;
  Activation strong_activation = Activation::Tanh;
  bool train_backbone = false;

  void validate() const;
};

/// Linear ramp from 0 to beta_final over the first warmup_fraction of the
/// iterations, then flat.
double beta_schedule(std::size_t iter, std::size_t total_iters, double beta_final,
                     double warmup_fraction);

struct AuxLoss {
  double loss = 0.0;
  std::vector<double> logit_gradient;
};

/// beta CE(weak, student) + (1 - beta) CE(harden(student, t), student).
/// The hardened target is a constant for differentiation.
AuxLoss aux_loss(const ProbVector& weak_label, const ProbVector& student_pred, double t,
                 double beta);

/// Generalized form: the supervision term is D_f(weak || student) for the
/// given loss; the confidence term stays cross-entropy.
AuxLoss aux_loss(const TrainLoss& loss, const ProbVector& weak_label,
                 const ProbVector& student_pred, double t, double beta);

/// Weak teacher: linear head on raw features, fit with cross-entropy to the
/// hardened true labels of the ground-truth split.
ModelPredictor train_weak(const DataSplit& split, const TrainConfig& cfg);

/// Clamped teacher predictions on the weak-supervision split.
std::vector<ProbVector> weak_label(const ModelPredictor& teacher, const DataSplit& split);

struct TrainHistory {
  std::vector<std::size_t> steps;
  std::vector<double> objective;  // mean training loss over the whole split
  // Weight on the supervision term at every step (1 without aux).
  std::vector<double> supervision_weight;
};

/// Fits the strong student to weak_labels (aligned with
/// split.weak_supervision). `history`, when given, receives the full-split
/// training objective at `checkpoints` evenly spaced steps.
ModelPredictor train_strong(const DataSplit& split, std::span<const ProbVector> weak_labels,
                            const TrainConfig& cfg, TrainHistory* history = nullptr,
                            std::size_t checkpoints = 5);

/// Mean training objective (without the aux term) of a model on labeled data.
double training_objective(const ModelPredictor& m, std::span<const Sample> samples,
                          std::span<const ProbVector> targets, const TrainLoss& loss);

/// Accuracy of hardened (t = 0.5) predictions against hardened true labels.
double accuracy(const ModelPredictor& m, std::span<const Sample> samples);

struct RunResult {
  TrainConfig config;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  double weak_test_accuracy = 0.0;
  double strong_test_accuracy = 0.0;
  DisagreementEstimate strong_vs_truth;
  DisagreementEstimate weak_vs_truth;
  DisagreementEstimate strong_vs_weak;
  theory::BoundCheck bound;
};

RunResult evaluate(const ModelPredictor& strong, const ModelPredictor& weak,
                   const DataSplit& split, DivergenceKind kind);

/// Everything after task generation for one (loss, noise, seed) cell, given a
/// trained teacher: pseudo-label, flip labels, train the student, evaluate.
RunResult run_student(const DataSplit& split, const ModelPredictor& teacher,
                      const TrainConfig& cfg, double noise_level);

/// Full pipeline from a task spec.
RunResult run_pipeline(const TaskSpec& task, const TrainConfig& cfg, double noise_level);

}  // namespace fdw2s
