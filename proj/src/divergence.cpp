#include "fdw2s/divergence.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <string>

#include "fdw2s/errors.hpp"

namespace fdw2s {

namespace {

void require_positive(double x) {
  if (!(x > 0.0) || !std::isfinite(x))
    throw DomainError("generator argument must be positive and finite, got " + std::to_string(x));
}

void require_same_shape(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size())
    throw ShapeError("divergence: dimension mismatch (" + std::to_string(p.size()) + " vs " +
                     std::to_string(q.size()) + ")");
}

void require_differentiable(DivergenceKind kind) {
  if (kind == DivergenceKind::TotalVariation)
    throw UnsupportedOperation("total variation has no derivative at ratio 1");
}

// Softmax Jacobian-vector product: dz_j = s_j (g_j - sum_i s_i g_i).
std::vector<double> through_softmax(const ProbVector& s, const std::vector<double>& g) {
  double mean = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) mean += s[i] * g[i];
  std::vector<double> out(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) out[j] = s[j] * (g[j] - mean);
  return out;
}

}  // namespace

std::string_view to_string(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::KL: return "KL";
    case DivergenceKind::ReverseKL: return "ReverseKL";
    case DivergenceKind::JensenShannon: return "JensenShannon";
    case DivergenceKind::Jeffreys: return "Jeffreys";
    case DivergenceKind::SquaredHellinger: return "SquaredHellinger";
    case DivergenceKind::PearsonChi2: return "PearsonChi2";
    case DivergenceKind::TotalVariation: return "TotalVariation";
  }
  return "?";
}

std::optional<DivergenceKind> parse_kind(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (auto k : kAllKinds) {
    std::string canon(to_string(k));
    std::transform(canon.begin(), canon.end(), canon.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == canon) return k;
  }
  if (s == "rkl") return DivergenceKind::ReverseKL;
  if (s == "js") return DivergenceKind::JensenShannon;
  if (s == "hellinger") return DivergenceKind::SquaredHellinger;
  if (s == "chi2") return DivergenceKind::PearsonChi2;
  if (s == "tv") return DivergenceKind::TotalVariation;
  return std::nullopt;
}

bool is_trainable(DivergenceKind kind) { return kind != DivergenceKind::TotalVariation; }

double generator_value(DivergenceKind kind, double x) {
  require_positive(x);
  switch (kind) {
    case DivergenceKind::KL: return x * std::log(x);
    case DivergenceKind::ReverseKL: return -std::log(x);
    case DivergenceKind::JensenShannon:
      return 0.5 * (x * std::log(x) - (x + 1.0) * std::log((x + 1.0) / 2.0));
    case DivergenceKind::Jeffreys: return (x - 1.0) * std::log(x);
    case DivergenceKind::SquaredHellinger: return 1.0 - std::sqrt(x);
    case DivergenceKind::PearsonChi2: return (x - 1.0) * (x - 1.0);
    case DivergenceKind::TotalVariation: return 0.5 * std::abs(x - 1.0);
  }
  return 0.0;
}

double generator_derivative(DivergenceKind kind, double x) {
  require_differentiable(kind);
  require_positive(x);
  switch (kind) {
    case DivergenceKind::KL: return std::log(x) + 1.0;
    case DivergenceKind::ReverseKL: return -1.0 / x;
    case DivergenceKind::JensenShannon: return 0.5 * std::log(2.0 * x / (x + 1.0));
    case DivergenceKind::Jeffreys: return std::log(x) + 1.0 - 1.0 / x;
    case DivergenceKind::SquaredHellinger: return -0.5 / std::sqrt(x);
    case DivergenceKind::PearsonChi2: return 2.0 * (x - 1.0);
    case DivergenceKind::TotalVariation: break;
  }
  return 0.0;
}

double tv_distance(const ProbVector& p, const ProbVector& q) {
  require_same_shape(p, q);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

double divergence(DivergenceKind kind, const ProbVector& p, const ProbVector& q) {
  require_same_shape(p, q);
  if (kind == DivergenceKind::TotalVariation) return tv_distance(p, q);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += q[i] * generator_value(kind, p[i] / q[i]);
  // Rounding can leave a value like -1e-17 when p == q.
  return std::max(s, 0.0);
}

std::vector<double> divergence_gradient(DivergenceKind kind, std::span<const double> p_logits,
                                        const ProbVector& q) {
  require_differentiable(kind);
  const ProbVector p = softmax(p_logits);
  require_same_shape(p, q);
  // dD/dp_i = f'(p_i / q_i)
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = generator_derivative(kind, p[i] / q[i]);
  return through_softmax(p, g);
}

std::vector<double> reference_gradient(DivergenceKind kind, const ProbVector& p,
                                       const ProbVector& q) {
  require_differentiable(kind);
  require_same_shape(p, q);
  // dD/dq_i = f(r_i) - r_i f'(r_i), r_i = p_i / q_i
  std::vector<double> h(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double r = p[i] / q[i];
    h[i] = generator_value(kind, r) - r * generator_derivative(kind, r);
  }
  return through_softmax(q, h);
}

DisagreementEstimate batch_disagreement(DivergenceKind kind, std::span<const ProbVector> preds_g,
                                        std::span<const ProbVector> preds_h) {
  if (preds_g.empty()) throw InvalidInput("batch_disagreement: empty prediction list");
  if (preds_g.size() != preds_h.size())
    throw InvalidInput("batch_disagreement: prediction lists differ in length");
  double s = 0.0;
  for (std::size_t j = 0; j < preds_g.size(); ++j) s += divergence(kind, preds_g[j], preds_h[j]);
  return {kind, s / static_cast<double>(preds_g.size()), preds_g.size()};
}

double sup_abs_fprime(DivergenceKind kind, double lo, double hi) {
  require_differentiable(kind);
  if (!(lo > 0.0) || !(hi >= lo) || !std::isfinite(hi))
    throw ConfigError("sup_abs_fprime: need 0 < lo <= hi");
  return std::max(std::abs(generator_derivative(kind, lo)),
                  std::abs(generator_derivative(kind, hi)));
}

}  // namespace fdw2s
