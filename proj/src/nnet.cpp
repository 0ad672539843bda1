#include "fdw2s/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "fdw2s/errors.hpp"

namespace fdw2s {

namespace {

double activate(Activation a, double v) {
  return a == Activation::Tanh ? std::tanh(v) : std::max(v, 0.0);
}

double activate_grad(Activation a, double pre, double post) {
  return a == Activation::Tanh ? 1.0 - post * post : (pre > 0.0 ? 1.0 : 0.0);
}

void check_shape(const ModelPredictor& m) {
  const auto& h = m.head;
  if (h.weights.size() != h.inputs * h.classes || h.bias.size() != h.classes)
    throw ShapeError("head parameter sizes do not match its shape");
  if (m.backbone) {
    const auto& b = *m.backbone;
    if (b.projection.size() != b.input_dim * b.width || b.bias.size() != b.width)
      throw ShapeError("backbone parameter sizes do not match its shape");
    if (b.width != h.inputs) throw ShapeError("backbone width does not match head inputs");
  }
}

}  // namespace

std::string_view to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

std::optional<Activation> parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  return std::nullopt;
}

FrozenBackbone FrozenBackbone::random(std::size_t input_dim, std::size_t width, Activation act,
                                      std::uint64_t seed) {
  if (input_dim == 0 || width == 0) throw ConfigError("backbone dimensions must be positive");
  FrozenBackbone b{input_dim, width, act, std::vector<double>(input_dim * width),
                   std::vector<double>(width, 0.0)};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(input_dim)));
  for (double& w : b.projection) w = dist(rng);
  return b;
}

TrainableHead TrainableHead::zeros(std::size_t inputs, std::size_t classes) {
  return {inputs, classes, std::vector<double>(inputs * classes, 0.0),
          std::vector<double>(classes, 0.0)};
}

ModelPredictor make_linear_model(std::size_t input_dim, std::size_t classes) {
  return {std::nullopt, TrainableHead::zeros(input_dim, classes), kDefaultClampEps};
}

ModelPredictor make_feature_model(FrozenBackbone backbone, std::size_t classes) {
  const std::size_t width = backbone.width;
  return {std::move(backbone), TrainableHead::zeros(width, classes), kDefaultClampEps};
}

Forward forward(const ModelPredictor& m, std::span<const double> x) {
  check_shape(m);
  if (x.size() != m.input_dim())
    throw ShapeError("predict: expected " + std::to_string(m.input_dim()) + " features, got " +
                     std::to_string(x.size()));
  Forward f;
  if (m.backbone) {
    const auto& b = *m.backbone;
    f.pre_activation = b.bias;
    for (std::size_t i = 0; i < b.input_dim; ++i) {
      const double xi = x[i];
      const double* row = &b.projection[i * b.width];
      for (std::size_t j = 0; j < b.width; ++j) f.pre_activation[j] += xi * row[j];
    }
    f.features.resize(b.width);
    for (std::size_t j = 0; j < b.width; ++j)
      f.features[j] = activate(b.activation, f.pre_activation[j]);
  } else {
    f.features.assign(x.begin(), x.end());
  }
  const auto& h = m.head;
  f.logits = h.bias;
  for (std::size_t i = 0; i < h.inputs; ++i) {
    const double fi = f.features[i];
    for (std::size_t c = 0; c < h.classes; ++c) f.logits[c] += fi * h.weights[i * h.classes + c];
  }
  f.prediction = clamp(softmax(f.logits), m.clamp_eps);
  return f;
}

ProbVector predict(const ModelPredictor& m, std::span<const double> x) {
  return forward(m, x).prediction;
}

Gradient Gradient::zeros_like(const ModelPredictor& m, bool with_backbone) {
  Gradient g;
  g.head_weights.assign(m.head.weights.size(), 0.0);
  g.head_bias.assign(m.head.bias.size(), 0.0);
  if (with_backbone && m.backbone) {
    g.backbone_projection.assign(m.backbone->projection.size(), 0.0);
    g.backbone_bias.assign(m.backbone->bias.size(), 0.0);
  }
  return g;
}

void Gradient::scale(double s) {
  for (auto* block : {&head_weights, &head_bias, &backbone_projection, &backbone_bias})
    for (double& v : *block) v *= s;
}

double Gradient::max_abs() const {
  double out = 0.0;
  for (const auto* block : {&head_weights, &head_bias, &backbone_projection, &backbone_bias})
    for (double v : *block) out = std::max(out, std::abs(v));
  return out;
}

void accumulate_backward(const ModelPredictor& m, std::span<const double> x, const Forward& fwd,
                         std::span<const double> dlogits, Gradient& grad) {
  const auto& h = m.head;
  if (dlogits.size() != h.classes) throw ShapeError("logit gradient has the wrong length");
  for (std::size_t i = 0; i < h.inputs; ++i)
    for (std::size_t c = 0; c < h.classes; ++c)
      grad.head_weights[i * h.classes + c] += fwd.features[i] * dlogits[c];
  for (std::size_t c = 0; c < h.classes; ++c) grad.head_bias[c] += dlogits[c];

  if (!m.backbone || grad.backbone_projection.empty()) return;
  const auto& b = *m.backbone;
  std::vector<double> dpre(b.width);
  for (std::size_t j = 0; j < b.width; ++j) {
    double dfeat = 0.0;
    for (std::size_t c = 0; c < h.classes; ++c) dfeat += h.weights[j * h.classes + c] * dlogits[c];
    dpre[j] = dfeat * activate_grad(b.activation, fwd.pre_activation[j], fwd.features[j]);
  }
  for (std::size_t i = 0; i < b.input_dim; ++i)
    for (std::size_t j = 0; j < b.width; ++j) grad.backbone_projection[i * b.width + j] += x[i] * dpre[j];
  for (std::size_t j = 0; j < b.width; ++j) grad.backbone_bias[j] += dpre[j];
}

LossAndGradient loss_and_gradient(const ModelPredictor& m, std::span<const Example> batch,
                                  DivergenceKind kind, bool train_backbone) {
  if (!is_trainable(kind)) throw UnsupportedOperation("total variation is not a training loss");
  if (batch.empty()) throw InvalidInput("loss_and_gradient: empty batch");
  LossAndGradient out{0.0, Gradient::zeros_like(m, train_backbone)};
  for (const auto& ex : batch) {
    const Forward f = forward(m, ex.x);
    const ProbVector target = clamp(*ex.target, m.clamp_eps);
    out.loss += divergence(kind, target, f.prediction);
    accumulate_backward(m, ex.x, f, reference_gradient(kind, target, f.prediction), out.gradient);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  out.gradient.scale(inv);
  return out;
}

LossAndGradient cross_entropy_loss_and_gradient(const ModelPredictor& m,
                                                std::span<const Example> batch,
                                                bool train_backbone) {
  if (batch.empty()) throw InvalidInput("cross_entropy: empty batch");
  LossAndGradient out{0.0, Gradient::zeros_like(m, train_backbone)};
  std::vector<double> dz(m.head.classes);
  for (const auto& ex : batch) {
    const Forward f = forward(m, ex.x);
    const ProbVector target = clamp(*ex.target, m.clamp_eps);
    for (std::size_t c = 0; c < dz.size(); ++c) {
      out.loss -= target[c] * std::log(f.prediction[c]);
      dz[c] = f.prediction[c] - target[c];
    }
    accumulate_backward(m, ex.x, f, dz, out.gradient);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  out.gradient.scale(inv);
  return out;
}

void OptimizerState::update(std::vector<double>& params, const std::vector<double>& grad,
                            Moments& mom) {
  if (grad.empty()) return;
  if (grad.size() != params.size()) throw ShapeError("optimizer: gradient/parameter size mismatch");
  if (mom.m.empty()) {
    mom.m.assign(params.size(), 0.0);
    mom.v.assign(params.size(), 0.0);
  }
  const auto t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i] + cfg_.weight_decay * params[i];
    mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g;
    mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g * g;
    const double mhat = mom.m[i] / bc1;
    const double vhat = mom.v[i] / bc2;
    params[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
  }
}

void OptimizerState::step(ModelPredictor& m, const Gradient& grad) {
  if (grad.head_weights.size() != m.head.weights.size() ||
      grad.head_bias.size() != m.head.bias.size())
    throw ShapeError("optimizer: gradient does not match the head");
  if (!grad.backbone_projection.empty() && !m.backbone)
    throw ShapeError("optimizer: backbone gradient for a model without a backbone");
  ++steps_;
  update(m.head.weights, grad.head_weights, head_w_);
  update(m.head.bias, grad.head_bias, head_b_);
  if (m.backbone) {
    update(m.backbone->projection, grad.backbone_projection, bb_w_);
    update(m.backbone->bias, grad.backbone_bias, bb_b_);
  }
}

void save_model(const ModelPredictor& m, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format"] = "fdw2s-model/1";
  j["clamp_eps"] = m.clamp_eps;
  if (m.backbone) {
    const auto& b = *m.backbone;
    j["backbone"] = {{"input_dim", b.input_dim},
                     {"width", b.width},
                     {"activation", to_string(b.activation)},
                     {"projection", b.projection},
                     {"bias", b.bias}};
  } else {
    j["backbone"] = nullptr;
  }
  j["head"] = {{"inputs", m.head.inputs},
               {"classes", m.head.classes},
               {"weights", m.head.weights},
               {"bias", m.head.bias}};
  std::ofstream os(path);
  if (!os) throw InvalidInput("cannot open " + path.string() + " for writing");
  os << j.dump(1) << '\n';
}

ModelPredictor load_model(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(is);
    if (j.at("format") != "fdw2s-model/1") throw InvalidInput("unknown checkpoint format");
    ModelPredictor m;
    m.clamp_eps = j.at("clamp_eps").get<double>();
    if (!j.at("backbone").is_null()) {
      const auto& b = j.at("backbone");
      auto act = parse_activation(b.at("activation").get<std::string>());
      if (!act) throw InvalidInput("unknown activation in checkpoint");
      m.backbone = FrozenBackbone{b.at("input_dim").get<std::size_t>(),
                                  b.at("width").get<std::size_t>(), *act,
                                  b.at("projection").get<std::vector<double>>(),
                                  b.at("bias").get<std::vector<double>>()};
    }
    const auto& h = j.at("head");
    m.head = TrainableHead{h.at("inputs").get<std::size_t>(), h.at("classes").get<std::size_t>(),
                           h.at("weights").get<std::vector<double>>(),
                           h.at("bias").get<std::vector<double>>()};
    check_shape(m);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(path.string() + ": malformed checkpoint: " + e.what());
  }
}

}  // namespace fdw2s
