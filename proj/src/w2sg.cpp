#include "fdw2s/w2sg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "fdw2s/errors.hpp"

namespace fdw2s {

namespace {

// Stream offsets so the teacher, the student and the noise draw independent
// RNG streams from one run seed.
constexpr std::uint64_t kWeakStream = 0x5851F42D4C957F2DULL;
constexpr std::uint64_t kStrongStream = 0x14057B7EF767814FULL;
constexpr std::uint64_t kBackboneStream = 0x2545F4914F6CDD1DULL;
constexpr std::uint64_t kNoiseStream = 0x9E3779B97F4A7C15ULL;

LossAndGradient supervised_step(const ModelPredictor& m, std::span<const Example> batch,
                                const TrainLoss& loss, bool train_backbone) {
  return loss.divergence ? loss_and_gradient(m, batch, *loss.divergence, train_backbone)
                         : cross_entropy_loss_and_gradient(m, batch, train_backbone);
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

std::vector<Example> make_batch(std::span<const Sample> samples,
                                std::span<const ProbVector> targets,
                                std::span<const std::size_t> order, std::size_t begin,
                                std::size_t end) {
  std::vector<Example> batch;
  batch.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i)
    batch.push_back({samples[order[i]].x, &targets[order[i]]});
  return batch;
}

}  // namespace

std::string TrainLoss::name() const {
  return divergence ? std::string(to_string(*divergence)) : std::string("CE");
}

std::optional<TrainLoss> parse_loss(std::string_view name) {
  if (name == "CE" || name == "ce") return TrainLoss::cross_entropy();
  const auto k = parse_kind(name);
  if (!k || !is_trainable(*k)) return std::nullopt;
  return TrainLoss::of(*k);
}

void TrainConfig::validate() const {
  if (loss.divergence && !is_trainable(*loss.divergence))
    throw UnsupportedOperation("total variation is not a training loss");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(beta_final >= 0.0 && beta_final <= 1.0)) throw ConfigError("beta_final must lie in [0, 1]");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0))
    throw ConfigError("warmup_fraction must lie in [0, 1]");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (!(clamp_eps > 0.0 && clamp_eps < 0.5)) throw ConfigError("clamp_eps must lie in (0, 0.5)");
  if (strong_width == 0) throw ConfigError("strong_width must be positive");
}

double beta_schedule(std::size_t iter, std::size_t total_iters, double beta_final,
                     double warmup_fraction) {
  const double warmup = warmup_fraction * static_cast<double>(total_iters);
  const auto it = static_cast<double>(iter);
  if (warmup <= 0.0 || it >= warmup) return beta_final;
  return beta_final * it / warmup;
}

AuxLoss aux_loss(const TrainLoss& loss, const ProbVector& weak_label,
                 const ProbVector& student_pred, double t, double beta) {
  if (weak_label.size() != 2 || student_pred.size() != 2)
    throw UnsupportedOperation("aux loss is defined for binary predictions only");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0, 1]");
  const ProbVector hard = harden(student_pred, t).one_hot();

  AuxLoss out{0.0, std::vector<double>(2, 0.0)};
  // supervision term
  if (loss.divergence) {
    out.loss = beta * divergence(*loss.divergence, weak_label, student_pred);
    const auto g = reference_gradient(*loss.divergence, weak_label, student_pred);
    for (std::size_t c = 0; c < 2; ++c) out.logit_gradient[c] = beta * g[c];
  } else {
    for (std::size_t c = 0; c < 2; ++c) {
      out.loss -= beta * weak_label[c] * std::log(student_pred[c]);
      out.logit_gradient[c] = beta * (student_pred[c] - weak_label[c]);
    }
  }
  // confidence term
  for (std::size_t c = 0; c < 2; ++c) {
    out.loss -= (1.0 - beta) * hard[c] * std::log(student_pred[c]);
    out.logit_gradient[c] += (1.0 - beta) * (student_pred[c] - hard[c]);
  }
  return out;
}

AuxLoss aux_loss(const ProbVector& weak_label, const ProbVector& student_pred, double t,
                 double beta) {
  return aux_loss(TrainLoss::cross_entropy(), weak_label, student_pred, t, beta);
}

ModelPredictor train_weak(const DataSplit& split, const TrainConfig& cfg) {
  cfg.validate();
  const auto& data = split.ground_truth;
  if (data.empty()) throw InvalidInput("train_weak: empty ground-truth split");

  std::vector<ProbVector> targets;
  targets.reserve(data.size());
  for (const auto& s : data) targets.push_back(clamp(harden(s.label, 0.5).one_hot(), cfg.clamp_eps));

  ModelPredictor m = make_linear_model(data.front().x.size());
  m.clamp_eps = cfg.clamp_eps;
  OptimizerState opt(AdamConfig{.learning_rate = cfg.learning_rate});
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed ^ kWeakStream);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < data.size(); b += cfg.batch_size) {
      const auto batch = make_batch(data, targets, order, b, std::min(b + cfg.batch_size, data.size()));
      opt.step(m, cross_entropy_loss_and_gradient(m, batch).gradient);
    }
  }
  return m;
}

std::vector<ProbVector> weak_label(const ModelPredictor& teacher, const DataSplit& split) {
  std::vector<ProbVector> out;
  out.reserve(split.weak_supervision.size());
  for (const auto& s : split.weak_supervision) out.push_back(predict(teacher, s.x));
  return out;
}

double training_objective(const ModelPredictor& m, std::span<const Sample> samples,
                          std::span<const ProbVector> targets, const TrainLoss& loss) {
  if (samples.size() != targets.size() || samples.empty())
    throw InvalidInput("training_objective: samples and targets are misaligned");
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ProbVector q = predict(m, samples[i].x);
    const ProbVector t = clamp(targets[i], m.clamp_eps);
    if (loss.divergence) {
      total += divergence(*loss.divergence, t, q);
    } else {
      for (std::size_t c = 0; c < q.size(); ++c) total -= t[c] * std::log(q[c]);
    }
  }
  return total / static_cast<double>(samples.size());
}

ModelPredictor train_strong(const DataSplit& split, std::span<const ProbVector> weak_labels,
                            const TrainConfig& cfg, TrainHistory* history,
                            std::size_t checkpoints) {
  cfg.validate();
  const auto& data = split.weak_supervision;
  if (data.empty()) throw InvalidInput("train_strong: empty weak-supervision split");
  if (weak_labels.size() != data.size())
    throw InvalidInput("train_strong: " + std::to_string(weak_labels.size()) +
                       " weak labels for " + std::to_string(data.size()) + " samples");

  std::vector<ProbVector> targets;
  targets.reserve(weak_labels.size());
  for (const auto& y : weak_labels) targets.push_back(clamp(y, cfg.clamp_eps));

  ModelPredictor m = make_feature_model(FrozenBackbone::random(
      data.front().x.size(), cfg.strong_width, cfg.strong_activation, cfg.seed ^ kBackboneStream));
  m.clamp_eps = cfg.clamp_eps;
  OptimizerState opt(AdamConfig{.learning_rate = cfg.learning_rate});

  const std::size_t total = cfg.epochs * steps_per_epoch(data.size(), cfg.batch_size);
  std::vector<std::size_t> record_at;
  if (history) {
    *history = {};
    const std::size_t n = std::max<std::size_t>(checkpoints, 2);
    for (std::size_t i = 0; i < n; ++i) record_at.push_back(i * total / (n - 1));
  }
  auto maybe_record = [&](std::size_t step) {
    if (!history || std::find(record_at.begin(), record_at.end(), step) == record_at.end()) return;
    if (!history->steps.empty() && history->steps.back() == step) return;
    history->steps.push_back(step);
    history->objective.push_back(training_objective(m, data, targets, cfg.loss));
  };

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed ^ kStrongStream);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < data.size(); b += cfg.batch_size, ++step) {
      maybe_record(step);
      const auto batch = make_batch(data, targets, order, b, std::min(b + cfg.batch_size, data.size()));
      if (!cfg.aux_enabled) {
        if (history) history->supervision_weight.push_back(1.0);
        opt.step(m, supervised_step(m, batch, cfg.loss, cfg.train_backbone).gradient);
        continue;
      }
      const double beta = beta_schedule(step, total, cfg.beta_final, cfg.warmup_fraction);
      if (history) history->supervision_weight.push_back(beta);
      Gradient grad = Gradient::zeros_like(m, cfg.train_backbone);
      for (const auto& ex : batch) {
        const Forward f = forward(m, ex.x);
        const AuxLoss aux = aux_loss(cfg.loss, *ex.target, f.prediction, cfg.threshold, beta);
        accumulate_backward(m, ex.x, f, aux.logit_gradient, grad);
      }
      grad.scale(1.0 / static_cast<double>(batch.size()));
      opt.step(m, grad);
    }
  }
  maybe_record(step);
  return m;
}

double accuracy(const ModelPredictor& m, std::span<const Sample> samples) {
  if (samples.empty()) throw InvalidInput("accuracy: empty sample list");
  std::size_t hits = 0;
  for (const auto& s : samples)
    hits += harden(predict(m, s.x), 0.5) == harden(s.label, 0.5) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

RunResult evaluate(const ModelPredictor& strong, const ModelPredictor& weak,
                   const DataSplit& split, DivergenceKind kind) {
  const auto& test = split.test;
  if (test.empty()) throw InvalidInput("evaluate: empty test split");
  std::vector<ProbVector> s_pred, w_pred, truth;
  s_pred.reserve(test.size());
  w_pred.reserve(test.size());
  truth.reserve(test.size());
  const double eps = strong.clamp_eps;
  for (const auto& s : test) {
    s_pred.push_back(predict(strong, s.x));
    w_pred.push_back(predict(weak, s.x));
    truth.push_back(clamp(s.label, eps));
  }
  RunResult r;
  r.weak_test_accuracy = accuracy(weak, test);
  r.strong_test_accuracy = accuracy(strong, test);
  r.strong_vs_truth = batch_disagreement(kind, s_pred, truth);
  r.weak_vs_truth = batch_disagreement(kind, w_pred, truth);
  r.strong_vs_weak = batch_disagreement(kind, s_pred, w_pred);
  if (is_trainable(kind)) r.bound = theory::check_limit_inequality(s_pred, w_pred, truth, kind, eps);
  return r;
}

RunResult run_student(const DataSplit& split, const ModelPredictor& teacher,
                      const TrainConfig& cfg, double noise_level) {
  const auto labels = weak_label(teacher, split);
  const auto noisy = inject_noise(labels, noise_level, cfg.seed ^ kNoiseStream);
  const ModelPredictor strong = train_strong(split, noisy.labels, cfg);
  RunResult r = evaluate(strong, teacher, split, cfg.loss.reporting_kind());
  r.config = cfg;
  r.noise_level = noise_level;
  r.seed = cfg.seed;
  return r;
}

RunResult run_pipeline(const TaskSpec& task, const TrainConfig& cfg, double noise_level) {
  const Task t = generate_task(task);
  const ModelPredictor teacher = train_weak(t.split, cfg);
  return run_student(t.split, teacher, cfg, noise_level);
}

}  // namespace fdw2s
