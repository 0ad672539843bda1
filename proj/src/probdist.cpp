#include "fdw2s/probdist.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fdw2s/errors.hpp"

namespace fdw2s {

namespace {

constexpr double kMassTolerance = 1e-9;

double sum(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0);
}

}  // namespace

ProbVector::ProbVector(std::vector<double> entries) : entries_(std::move(entries)) {
  if (entries_.size() < 2) throw ShapeError("probability vector needs k >= 2 entries");
  for (double e : entries_) {
    if (!std::isfinite(e) || e < 0.0)
      throw InvalidInput("probability entries must be finite and nonnegative");
  }
  const double total = sum(entries_);
  if (std::abs(total - 1.0) > kMassTolerance)
    throw InvalidInput("probability entries sum to " + std::to_string(total) + ", expected 1");
  for (double& e : entries_) e /= total;
}

std::size_t ProbVector::argmax() const {
  return static_cast<std::size_t>(std::max_element(entries_.begin(), entries_.end()) -
                                  entries_.begin());
}

ProbVector HardPrediction::one_hot() const {
  std::vector<double> v(classes, 0.0);
  v.at(label) = 1.0;
  return ProbVector(std::move(v));
}

ProbVector softmax(std::span<const double> logits) {
  if (logits.size() < 2) throw ShapeError("softmax needs k >= 2 logits");
  for (double l : logits)
    if (!std::isfinite(l)) throw InvalidInput("softmax: non-finite logit");
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    z += out[i];
  }
  for (double& o : out) o /= z;
  return ProbVector(ProbVector::Unchecked{}, std::move(out));
}

ProbVector clamp(const ProbVector& p, double eps) {
  const auto k = static_cast<double>(p.size());
  if (!(eps > 0.0 && eps < 1.0 / k))
    throw ConfigError("clamp eps must lie in (0, 1/k), got " + std::to_string(eps));
  const double lo = eps;
  const double hi = 1.0 - eps;

  const auto& in = p.entries_;
  if (std::all_of(in.begin(), in.end(), [&](double x) { return x >= lo && x <= hi; }))
    return p;

  auto mass = [&](double tau) {
    double s = 0.0;
    for (double x : in) s += std::clamp(x - tau, lo, hi);
    return s;
  };
  // mass(tau) is nonincreasing; mass(-1) = k(1-eps) >= 1 >= k eps = mass(1).
  double a = -1.0, b = 1.0;
  for (int it = 0; it < 200 && b - a > 0.0; ++it) {
    const double mid = 0.5 * (a + b);
    if (mid == a || mid == b) break;
    (mass(mid) > 1.0 ? a : b) = mid;
  }
  // Re-solve tau exactly on the active set found by bisection.
  const double tau0 = 0.5 * (a + b);
  double fixed = 0.0, free_sum = 0.0;
  std::size_t n_free = 0;
  for (double x : in) {
    const double y = x - tau0;
    if (y <= lo) {
      fixed += lo;
    } else if (y >= hi) {
      fixed += hi;
    } else {
      free_sum += x;
      ++n_free;
    }
  }
  const double tau = n_free > 0 ? (free_sum + fixed - 1.0) / static_cast<double>(n_free) : tau0;

  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::clamp(in[i] - tau, lo, hi);
  const double total = sum(out);
  for (double& o : out) o /= total;
  return ProbVector(ProbVector::Unchecked{}, std::move(out));
}

HardPrediction harden(const ProbVector& p, double t) {
  if (p.size() != 2) throw UnsupportedOperation("harden is defined for binary predictions only");
  if (!(t > 0.0 && t < 1.0)) throw ConfigError("hardening threshold must lie in (0, 1)");
  return HardPrediction{p[1] > t ? 1u : 0u, 2};
}

}  // namespace fdw2s
