#pragma once

// Predictors G = g o h: an optional frozen random-feature backbone h followed
// by a trainable linear head g and a clamped softmax. Gradients are derived
// by hand; Adam does the updates.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fdw2s/divergence.hpp"
#include "fdw2s/probdist.hpp"

namespace fdw2s {

enum class Activation { Tanh, Relu };

std::string_view to_string(Activation a);
std::optional<Activation> parse_activation(std::string_view name);

struct FrozenBackbone {
  std::size_t input_dim = 0;
  std::size_t width = 0;
  Activation activation = Activation::Tanh;
  std::vector<double> projection;  // input_dim x width, row-major
  std::vector<double> bias;        // width

  /// Entries i.i.d. N(0, 2 / input_dim), zero bias.
  static FrozenBackbone random(std::size_t input_dim, std::size_t width, Activation act,
                               std::uint64_t seed);

  friend bool operator==(const FrozenBackbone&, const FrozenBackbone&) = default;
};

struct TrainableHead {
  std::size_t inputs = 0;
  std::size_t classes = 2;
  std::vector<double> weights;  // inputs x classes, row-major
  std::vector<double> bias;     // classes

  static TrainableHead zeros(std::size_t inputs, std::size_t classes);

  friend bool operator==(const TrainableHead&, const TrainableHead&) = default;
};

struct ModelPredictor {
  std::optional<FrozenBackbone> backbone;  // nullopt: identity (raw features)
  TrainableHead head;
  double clamp_eps = kDefaultClampEps;

  std::size_t input_dim() const { return backbone ? backbone->input_dim : head.inputs; }

  friend bool operator==(const ModelPredictor&, const ModelPredictor&) = default;
};

/// Linear model on raw features with a zero head.
ModelPredictor make_linear_model(std::size_t input_dim, std::size_t classes = 2);
/// Random-feature backbone plus zero head.
ModelPredictor make_feature_model(FrozenBackbone backbone, std::size_t classes = 2);

/// Intermediate values of one forward pass, reused by the backward pass.
struct Forward {
  std::vector<double> pre_activation;  // empty without a backbone
  std::vector<double> features;
  std::vector<double> logits;
  ProbVector prediction{std::vector<double>{0.5, 0.5}};
};

Forward forward(const ModelPredictor& m, std::span<const double> x);

/// clamp(softmax(head(activation(backbone(x))))). ShapeError on a dimension mismatch.
ProbVector predict(const ModelPredictor& m, std::span<const double> x);

/// Gradient blocks mirroring the trainable parameters. The backbone blocks
/// stay empty unless backbone training is switched on.
struct Gradient {
  std::vector<double> head_weights;
  std::vector<double> head_bias;
  std::vector<double> backbone_projection;
  std::vector<double> backbone_bias;

  static Gradient zeros_like(const ModelPredictor& m, bool with_backbone);
  void scale(double s);
  double max_abs() const;
};

/// Adds the parameter gradient implied by d(loss)/d(logits) = dlogits.
void accumulate_backward(const ModelPredictor& m, std::span<const double> x, const Forward& fwd,
                         std::span<const double> dlogits, Gradient& grad);

struct Example {
  std::span<const double> x;
  const ProbVector* target;
};

struct LossAndGradient {
  double loss = 0.0;
  Gradient gradient;
};

/// Mean over the batch of D_f(target || predict(m, x)) and its gradient.
///
/// The prediction sits in the Q slot of D_f(P||Q) = E_Q f(dP/dQ), which makes
/// the KL loss equal to cross-entropy minus target entropy. Targets are clamped
/// with the model's eps. The clamp is treated as identity when differentiating.
LossAndGradient loss_and_gradient(const ModelPredictor& m, std::span<const Example> batch,
                                  DivergenceKind kind, bool train_backbone = false);

/// Mean cross-entropy -sum_i t_i ln q_i and its gradient (q - t through the
/// logits). Kept separate from the divergence path as a baseline.
LossAndGradient cross_entropy_loss_and_gradient(const ModelPredictor& m,
                                                std::span<const Example> batch,
                                                bool train_backbone = false);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

class OptimizerState {
 public:
  explicit OptimizerState(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// One Adam update of the head (and the backbone when the gradient carries
  /// backbone blocks).
  void step(ModelPredictor& m, const Gradient& grad);

  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  void update(std::vector<double>& params, const std::vector<double>& grad, Moments& mom);

  AdamConfig cfg_;
  std::uint64_t steps_ = 0;
  Moments head_w_, head_b_, bb_w_, bb_b_;
};

// Checkpoints: JSON {"format": "fdw2s-model/1", "clamp_eps", "backbone":
// null | {"input_dim", "width", "activation", "projection", "bias"}, "head":
// {"inputs", "classes", "weights", "bias"}}; matrices row-major.
void save_model(const ModelPredictor& m, const std::filesystem::path& path);
ModelPredictor load_model(const std::filesystem::path& path);

}  // namespace fdw2s
