#include "fdw2s/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include <boost/math/tools/roots.hpp>

#include "fdw2s/errors.hpp"

namespace fdw2s::theory {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kShards = 8;

// Open range (lo, hi) of f'.
std::pair<double, double> fprime_range(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::KL:
    case DivergenceKind::Jeffreys: return {-kInf, kInf};
    case DivergenceKind::ReverseKL:
    case DivergenceKind::SquaredHellinger: return {-kInf, 0.0};
    case DivergenceKind::JensenShannon: return {-kInf, 0.5 * std::numbers::ln2};
    case DivergenceKind::PearsonChi2: return {-2.0, kInf};
    case DivergenceKind::TotalVariation: break;
  }
  throw UnsupportedOperation("total variation has no invertible derivative");
}

double jeffreys_inverse(double y) {
  // Solve u + 1 - exp(-u) = y for u = ln x; the left side is increasing.
  const double lo = y < 0.0 ? -std::log1p(-y) - 1.0 : -1.0;
  const double hi = y < 0.0 ? 0.0 : std::max(y, 1.0);
  auto fn = [y](double u) {
    const double e = std::exp(-u);
    return std::make_pair(u + 1.0 - e - y, 1.0 + e);
  };
  std::uintmax_t iters = 200;
  const double u = boost::math::tools::newton_raphson_iterate(fn, 0.5 * (lo + hi), lo, hi,
                                                              std::numeric_limits<double>::digits,
                                                              iters);
  return std::exp(u);
}

template <typename Fn>
void run_shards(std::size_t trials, Fn&& fn) {
  const std::size_t threads =
      std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, kShards);
  auto shard_range = [&](std::size_t s) {
    return std::make_pair(trials * s / kShards, trials * (s + 1) / kShards);
  };
  if (threads == 1) {
    for (std::size_t s = 0; s < kShards; ++s) fn(s, shard_range(s).first, shard_range(s).second);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t s = t; s < kShards; s += threads)
        fn(s, shard_range(s).first, shard_range(s).second);
    });
  for (auto& th : pool) th.join();
}

ProbVector random_distribution(std::mt19937_64& rng, std::size_t k, double concentration) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<double> v(k);
  double s = 0.0;
  for (double& e : v) {
    e = gamma(rng);
    s += e;
  }
  if (!(s > 0.0)) {
    v.assign(k, 1.0);
    s = static_cast<double>(k);
  }
  for (double& e : v) e /= s;
  return ProbVector(std::move(v));
}

}  // namespace

std::pair<double, double> clamped_ratio_interval(double eps) {
  if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("clamp eps must lie in (0, 0.5)");
  return {eps / (1.0 - eps), (1.0 - eps) / eps};
}

BoundCheck check_limit_inequality(std::span<const ProbVector> strong_preds,
                                  std::span<const ProbVector> weak_preds,
                                  std::span<const ProbVector> true_labels, DivergenceKind kind,
                                  double eps) {
  if (!is_trainable(kind)) throw UnsupportedOperation("bound check needs a differentiable f");
  if (strong_preds.size() != weak_preds.size() || strong_preds.size() != true_labels.size())
    throw InvalidInput("check_limit_inequality: prediction lists are misaligned");
  if (strong_preds.empty()) throw InvalidInput("check_limit_inequality: empty prediction lists");

  BoundCheck b;
  b.ratio_interval = clamped_ratio_interval(eps);
  b.sup_fprime = sup_abs_fprime(kind, b.ratio_interval.first, b.ratio_interval.second);
  const double r_strong = batch_disagreement(kind, strong_preds, true_labels).value;
  const double r_weak = batch_disagreement(kind, weak_preds, true_labels).value;
  b.lhs = std::abs(r_strong - r_weak);
  double tv = 0.0;
  for (std::size_t i = 0; i < strong_preds.size(); ++i) tv += tv_distance(strong_preds[i], weak_preds[i]);
  b.mean_tv = tv / static_cast<double>(strong_preds.size());
  b.rhs = 2.0 * b.sup_fprime * b.mean_tv;
  b.residual = b.rhs - b.lhs;
  return b;
}

double pinsker_constant(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::KL:
    case DivergenceKind::ReverseKL: return 1.0 / std::numbers::sqrt2;
    case DivergenceKind::Jeffreys:
    case DivergenceKind::PearsonChi2: return 0.5;
    case DivergenceKind::JensenShannon: return std::numbers::sqrt2;
    case DivergenceKind::SquaredHellinger: return 1.0;
    case DivergenceKind::TotalVariation: break;
  }
  throw UnsupportedOperation("no Pinsker constant for total variation against itself");
}

double pinsker_divergence(DivergenceKind kind, const ProbVector& p, const ProbVector& q) {
  const double d = divergence(kind, p, q);
  return kind == DivergenceKind::SquaredHellinger ? 2.0 * d : d;
}

PinskerReport verify_pinsker(DivergenceKind kind, std::size_t trials, std::uint64_t seed) {
  const double c = pinsker_constant(kind);
  PinskerReport report{kind, 0, 0.0, c, {}};

  struct ShardResult {
    double max_ratio = 0.0;
    std::vector<PinskerWitness> violations;
  };
  auto check = [&](const ProbVector& p, const ProbVector& q, ShardResult& r) {
    const double tv = tv_distance(p, q);
    const double d = pinsker_divergence(kind, p, q);
    const double bound = c * std::sqrt(d);
    if (d > 0.0) r.max_ratio = std::max(r.max_ratio, tv / std::sqrt(d));
    if (tv > bound + 1e-12 + 1e-9 * bound) r.violations.push_back({p, q, tv, bound});
  };

  std::vector<ShardResult> shards(kShards);
  run_shards(trials, [&](std::size_t s, std::size_t begin, std::size_t end) {
    std::mt19937_64 rng(seed + 0x632BE59BD9B4E019ULL * (s + 1));
    std::uniform_int_distribution<std::size_t> dim(2, 10);
    constexpr double concentrations[] = {0.1, 1.0, 10.0};
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t k = dim(rng);
      const double a = concentrations[i % 3];
      const ProbVector p = clamp(random_distribution(rng, k, a));
      // Every 50th pair is an identity pair.
      const ProbVector q = (i % 50 == 0) ? p : clamp(random_distribution(rng, k, a));
      check(p, q, shards[s]);
    }
  });

  ShardResult stress;
  for (double e : {1e-6, 1e-3}) {
    const ProbVector p({1.0 - e, e});
    const ProbVector q({e, 1.0 - e});
    check(p, q, stress);
    check(q, p, stress);
  }
  shards.push_back(std::move(stress));

  report.trials = trials + 4;
  for (auto& s : shards) {
    report.max_ratio = std::max(report.max_ratio, s.max_ratio);
    for (auto& v : s.violations) report.violations.push_back(std::move(v));
  }
  return report;
}

double f_prime_inverse(DivergenceKind kind, double y) {
  const auto [lo, hi] = fprime_range(kind);
  if (!std::isfinite(y) || !(y > lo && y < hi))
    throw DomainError("f_prime_inverse: " + std::to_string(y) + " is outside the range of f' for " +
                      std::string(to_string(kind)));
  double x = 0.0;
  switch (kind) {
    case DivergenceKind::KL: x = std::exp(y - 1.0); break;
    case DivergenceKind::ReverseKL: x = -1.0 / y; break;
    case DivergenceKind::JensenShannon: {
      const double s = std::exp(2.0 * y);
      x = s / (2.0 - s);
      break;
    }
    case DivergenceKind::Jeffreys: x = jeffreys_inverse(y); break;
    case DivergenceKind::SquaredHellinger: x = 1.0 / (4.0 * y * y); break;
    case DivergenceKind::PearsonChi2: x = 0.5 * y + 1.0; break;
    case DivergenceKind::TotalVariation: break;
  }
  if (!(x > 0.0) || !std::isfinite(x))
    throw DomainError("f_prime_inverse: result not representable for y = " + std::to_string(y));
  return x;
}

std::pair<double, double> multiplier_domain(DivergenceKind kind, double alpha,
                                            std::span<const double> losses) {
  const auto [a, b] = fprime_range(kind);
  const auto [mn, mx] = std::minmax_element(losses.begin(), losses.end());
  // -alpha L_j - c < b for all j  <=>  c > -alpha L_min - b
  // -alpha L_j - c > a for all j  <=>  c < -alpha L_max - a
  const double lo = std::isinf(b) ? -kInf : -alpha * *mn - b;
  const double hi = std::isinf(a) ? kInf : -alpha * *mx - a;
  return {lo, hi};
}

double solve_normalization(DivergenceKind kind, double alpha, std::span<const double> losses,
                           const ProbVector& reference) {
  if (losses.size() != reference.size())
    throw ShapeError("solve_normalization: losses and reference differ in length");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be nonnegative");
  for (double l : losses)
    if (!std::isfinite(l)) throw InvalidInput("solve_normalization: non-finite loss");

  auto constraint = [&](double c) {
    double s = 0.0;
    for (std::size_t j = 0; j < losses.size(); ++j)
      s += reference[j] * f_prime_inverse(kind, -alpha * losses[j] - c);
    return s - 1.0;
  };
  const auto [lo, hi] = multiplier_domain(kind, alpha, losses);
  if (!(lo < hi)) throw NumericError("solve_normalization: empty multiplier domain");

  // Start from the constant-loss solution c = -f'(1) - alpha E_Q[L], pulled
  // inside the domain.
  double mean_loss = 0.0;
  for (std::size_t j = 0; j < losses.size(); ++j) mean_loss += reference[j] * losses[j];
  double c0 = -generator_derivative(kind, 1.0) - alpha * mean_loss;
  if (!(c0 > lo && c0 < hi)) {
    if (std::isfinite(lo) && std::isfinite(hi)) c0 = 0.5 * (lo + hi);
    else if (std::isfinite(lo)) c0 = lo + 1.0;
    else c0 = hi - 1.0;
  }

  // The constraint decreases in c: walk left until positive, right until negative.
  auto probe = [&](double toward, int direction) {
    double c = c0;
    double step = 1.0;
    double val = 0.0;
    for (int it = 0; it < 2000; ++it) {
      val = constraint(c);
      if (direction < 0 ? val > 0.0 : val < 0.0) return std::make_pair(c, val);
      if (std::isfinite(toward)) {
        const double next = toward + 0.5 * (c - toward);
        if (next == toward) break;
        c = next;
      } else {
        c += direction * step;
        step *= 2.0;
      }
    }
    std::ostringstream msg;
    msg << "solve_normalization(" << to_string(kind) << ", alpha=" << alpha
        << "): cannot bracket the multiplier; domain (" << lo << ", " << hi << "), constraint at "
        << c << " is " << val << " (no interior solution)";
    throw NumericError(msg.str());
  };
  auto [a, fa] = probe(lo, -1);
  auto [b, fb] = probe(hi, +1);

  std::uintmax_t iters = 300;
  auto tol = [](double x, double y) {
    return std::abs(x - y) <= 4.0 * std::numeric_limits<double>::epsilon() *
                                  std::max({1.0, std::abs(x), std::abs(y)});
  };
  const auto [ra, rb] = boost::math::tools::toms748_solve(constraint, a, b, fa, fb, tol, iters);
  const double fra = std::abs(constraint(ra));
  const double frb = std::abs(constraint(rb));
  const double root = fra <= frb ? ra : rb;
  const double residual = std::min(fra, frb);
  if (!(residual < 1e-10)) {
    std::ostringstream msg;
    msg << "solve_normalization: residual " << residual << " at c = " << root;
    throw NumericError(msg.str());
  }
  return root;
}

TiltedSolution tilted_distribution(DivergenceKind kind, double alpha,
                                   std::span<const double> losses, const ProbVector& reference) {
  if (alpha == 0.0) {
    if (losses.size() != reference.size()) throw ShapeError("losses and reference differ in length");
    return {reference, -generator_derivative(kind, 1.0), 0.0};
  }
  const double c = solve_normalization(kind, alpha, losses, reference);
  std::vector<double> w(reference.size());
  double total = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    w[j] = reference[j] * f_prime_inverse(kind, -alpha * losses[j] - c);
    total += w[j];
  }
  // Entries already sum to 1 up to the solver residual; dividing by the
  // total only removes that residual.
  for (double& e : w) e /= total;
  return {ProbVector(std::move(w)), c, total - 1.0};
}

TransformedLosses transform_regularizer(DivergenceKind f1, DivergenceKind f2, double alpha,
                                        std::span<const double> losses,
                                        const ProbVector& reference) {
  if (!(alpha > 0.0)) throw ConfigError("transform_regularizer: alpha must be positive");
  TransformedLosses out;
  out.first_multiplier = solve_normalization(f1, alpha, losses, reference);
  out.values.resize(losses.size());
  for (std::size_t j = 0; j < losses.size(); ++j) {
    const double g = f_prime_inverse(f1, -alpha * losses[j] - out.first_multiplier);
    out.values[j] = -generator_derivative(f2, g) / alpha;
  }
  out.second_multiplier = solve_normalization(f2, alpha, out.values, reference);
  return out;
}

}  // namespace fdw2s::theory
