#pragma once

// Categorical probability vectors and the maps between logits, soft
// predictions and hardened (one-hot) predictions.

#include <cstddef>
#include <span>
#include <vector>

namespace fdw2s {

inline constexpr double kDefaultClampEps = 1e-6;

/// A length-k categorical distribution (k >= 2).
///
/// Construction validates finiteness, nonnegativity and total mass (within
/// 1e-9) and renormalizes so the entries sum to 1. Entries may be exactly 0
/// (one-hot targets); `clamp` moves them strictly inside (0, 1).
class ProbVector {
 public:
  explicit ProbVector(std::vector<double> entries);

  static ProbVector binary(double p1) { return ProbVector({1.0 - p1, p1}); }

  std::size_t size() const { return entries_.size(); }
  double operator[](std::size_t i) const { return entries_[i]; }
  std::span<const double> entries() const { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::size_t argmax() const;

  friend bool operator==(const ProbVector&, const ProbVector&) = default;

 private:
  struct Unchecked {};
  ProbVector(Unchecked, std::vector<double> entries) : entries_(std::move(entries)) {}
  friend ProbVector clamp(const ProbVector&, double);
  friend ProbVector softmax(std::span<const double>);

  std::vector<double> entries_;
};

/// One-hot binary prediction produced by thresholding.
struct HardPrediction {
  std::size_t label = 0;
  std::size_t classes = 2;

  ProbVector one_hot() const;
  friend bool operator==(const HardPrediction&, const HardPrediction&) = default;
};

/// Max-subtracted softmax. Throws InvalidInput on non-finite logits or fewer
/// than two classes.
ProbVector softmax(std::span<const double> logits);

/// Projects every entry into [eps, 1 - eps] while keeping total mass 1.
///
/// The projection is x_i = min(max(p_i - tau, eps), 1 - eps) with the shift
/// tau chosen so the entries sum to 1 (Euclidean projection onto the clipped
/// simplex). Unlike clip-then-divide it can never push an entry back below
/// eps, it is idempotent, and it preserves entry order. Requires
/// 0 < eps < 1/k (ConfigError otherwise).
ProbVector clamp(const ProbVector& p, double eps = kDefaultClampEps);

/// Binary thresholding: class 1 iff p[1] > t (strict), else class 0.
/// Throws UnsupportedOperation for k != 2, ConfigError for t outside (0, 1).
HardPrediction harden(const ProbVector& p, double t);

}  // namespace fdw2s
