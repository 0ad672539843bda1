#pragma once

// f-divergences over finite categorical supports, in nats.
//
// D_f(P||Q) = sum_i q_i f(p_i / q_i) for a convex generator f with f(1) = 0.
// Total variation is available as a metric but has no derivative and is never
// used as a training objective.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fdw2s/probdist.hpp"

namespace fdw2s {

enum class DivergenceKind {
  KL,
  ReverseKL,
  JensenShannon,
  Jeffreys,
  SquaredHellinger,
  PearsonChi2,
  TotalVariation,
};

inline constexpr std::array<DivergenceKind, 7> kAllKinds = {
    DivergenceKind::KL,          DivergenceKind::ReverseKL,        DivergenceKind::JensenShannon,
    DivergenceKind::Jeffreys,    DivergenceKind::SquaredHellinger, DivergenceKind::PearsonChi2,
    DivergenceKind::TotalVariation};

/// The six differentiable kinds usable as training losses.
inline constexpr std::array<DivergenceKind, 6> kTrainableKinds = {
    DivergenceKind::KL,       DivergenceKind::ReverseKL,        DivergenceKind::JensenShannon,
    DivergenceKind::Jeffreys, DivergenceKind::SquaredHellinger, DivergenceKind::PearsonChi2};

std::string_view to_string(DivergenceKind kind);
/// Accepts the canonical names returned by to_string plus a few aliases
/// (kl, rkl, js, jeffreys, hellinger, chi2, tv); case-insensitive.
std::optional<DivergenceKind> parse_kind(std::string_view name);
bool is_trainable(DivergenceKind kind);

/// f(x). Throws DomainError for x <= 0.
double generator_value(DivergenceKind kind, double x);

/// f'(x). Throws UnsupportedOperation for TotalVariation, DomainError for x <= 0.
double generator_derivative(DivergenceKind kind, double x);

/// D_f(p||q). TV is evaluated as half the L1 distance. Inputs are expected to
/// be clamped; throws ShapeError on a dimension mismatch.
double divergence(DivergenceKind kind, const ProbVector& p, const ProbVector& q);

double tv_distance(const ProbVector& p, const ProbVector& q);

/// Gradient of D_f(softmax(p_logits) || q) with respect to p_logits.
std::vector<double> divergence_gradient(DivergenceKind kind, std::span<const double> p_logits,
                                        const ProbVector& q);

/// Gradient of D_f(p || softmax(z)) with respect to z, given q = softmax(z).
///
/// This is the slot a model occupies when it is fit to a target distribution:
/// with KL it reduces to the cross-entropy gradient q - p.
std::vector<double> reference_gradient(DivergenceKind kind, const ProbVector& p,
                                       const ProbVector& q);

struct DisagreementEstimate {
  DivergenceKind kind;
  double value = 0.0;
  std::size_t n = 0;
};

/// Mean of D_f(g_j || h_j) over aligned prediction lists, summed in index order.
DisagreementEstimate batch_disagreement(DivergenceKind kind, std::span<const ProbVector> preds_g,
                                        std::span<const ProbVector> preds_h);

/// sup |f'(x)| over [lo, hi]. Every generator here is convex, so f' is
/// nondecreasing and |f'| peaks at an endpoint.
double sup_abs_fprime(DivergenceKind kind, double lo, double hi);

}  // namespace fdw2s
