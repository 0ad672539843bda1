#pragma once

// Numerical checks of the f-divergence theory: the mean-value bound relating
// two models' risk gap to their TV disagreement, Pinsker-type TV bounds, and
// the tilted-distribution solutions of f-divergence-regularized objectives.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "fdw2s/divergence.hpp"
#include "fdw2s/probdist.hpp"

namespace fdw2s::theory {

struct BoundCheck {
  double lhs = 0.0;       // |R_f(strong, truth) - R_f(weak, truth)|
  double rhs = 0.0;       // 2 sup|f'| mean TV(strong, weak)
  double residual = 0.0;  // rhs - lhs
  double sup_fprime = 0.0;
  double mean_tv = 0.0;
  std::pair<double, double> ratio_interval;
};

/// Ratio interval reachable by p_i / q_i when both vectors are clamped at eps.
std::pair<double, double> clamped_ratio_interval(double eps);

/// Evaluates |R_f(s, y) - R_f(w, y)| <= 2 sup_{[lo, hi]}|f'| E[TV(s, w)] with
/// [lo, hi] = [eps/(1-eps), (1-eps)/eps]. Throws InvalidInput on misaligned
/// lists and UnsupportedOperation for TV.
BoundCheck check_limit_inequality(std::span<const ProbVector> strong_preds,
                                  std::span<const ProbVector> weak_preds,
                                  std::span<const ProbVector> true_labels, DivergenceKind kind,
                                  double eps = kDefaultClampEps);

/// c such that TV(p, q) <= c sqrt(D(p || q)) is claimed for `kind`.
///
/// KL and reverse KL: 1/sqrt(2) (Pinsker). Jeffreys: 1/2. Pearson chi^2: 1/2.
/// JS: sqrt(2). Squared Hellinger: 1 against the closed form
/// sum (sqrt p - sqrt q)^2, which is twice the generator sum 1 - sum sqrt(pq);
/// `pinsker_divergence` applies that factor.
double pinsker_constant(DivergenceKind kind);
double pinsker_divergence(DivergenceKind kind, const ProbVector& p, const ProbVector& q);

struct PinskerWitness {
  ProbVector p;
  ProbVector q;
  double tv = 0.0;
  double bound = 0.0;
};

struct PinskerReport {
  DivergenceKind kind;
  std::size_t trials = 0;      // random pairs plus boundary stress pairs
  double max_ratio = 0.0;      // max TV / sqrt(D) over pairs with D > 0
  double constant = 0.0;
  std::vector<PinskerWitness> violations;
};

/// Random clamped pairs with k in {2..10} plus the boundary pairs
/// ((1-e, e), (e, 1-e)) for e in {1e-6, 1e-3}. A pair violates the bound
/// when TV exceeds c sqrt(D) by more than 1e-12 (absolute) + 1e-9 (relative).
PinskerReport verify_pinsker(DivergenceKind kind, std::size_t trials, std::uint64_t seed);

/// (f')^{-1}(y). Closed forms except Jeffreys, which is root-found to 1e-12.
/// DomainError when y is outside the range of f'.
double f_prime_inverse(DivergenceKind kind, double y);

/// Interval (lo, hi) of c values for which every argument -alpha L_j - c lies
/// in the range of f'. Infinite ends are +-inf.
std::pair<double, double> multiplier_domain(DivergenceKind kind, double alpha,
                                            std::span<const double> losses);

/// Solves sum_j Q_j (f')^{-1}(-alpha L_j - c) = 1 for c. The left side is
/// strictly decreasing in c, so the root is unique when it exists; throws
/// NumericError with the bracket values otherwise.
double solve_normalization(DivergenceKind kind, double alpha, std::span<const double> losses,
                           const ProbVector& reference);

struct TiltedSolution {
  ProbVector tilted;
  double multiplier = 0.0;
  double constraint_residual = 0.0;  // sum_j Q_j (f')^{-1}(...) - 1
};

/// tilted_j = Q_j (f')^{-1}(-alpha L_j - c). alpha = 0 returns Q itself.
TiltedSolution tilted_distribution(DivergenceKind kind, double alpha,
                                   std::span<const double> losses, const ProbVector& reference);

struct TransformedLosses {
  std::vector<double> values;   // v(L_j)
  double first_multiplier = 0.0;   // c for (f1, L)
  double second_multiplier = 0.0;  // c solved for (f2, v); the gauge shift
};

/// v_j = -(1/alpha) f2'((f1')^{-1}(-alpha L_j - c1)), so that the f2-tilted
/// solution under v reproduces the f1-tilted solution under L. The f2
/// multiplier is then re-solved from scratch and reported; with this gauge it
/// comes out at 0 up to rounding.
TransformedLosses transform_regularizer(DivergenceKind f1, DivergenceKind f2, double alpha,
                                        std::span<const double> losses,
                                        const ProbVector& reference);

}  // namespace fdw2s::theory
