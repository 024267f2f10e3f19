#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "qae/errors.hpp"
#include "qae/reward_group.hpp"

namespace qae {

enum class Estimator { MeanStd, QuantileStd, PosMask, NegMask };

// One-sided ablations of the quantile gate.
enum class MaskSide { PosMask, NegMask };

enum class Regime { Hard, Easy };

// Difficulty classification of a group at quantile level K. The boundary
// p == 1-K belongs to Hard, which is forced by the right-continuous quantile
// (F(0) = 1-p >= K already triggers the infimum at 0).
struct RegimeTag {
  Regime regime;
  double threshold;  // 1 - K
};

// Per-response advantages together with the baseline and estimator that
// produced them.
struct AdvantageVector {
  std::vector<double> values;
  double baseline = 0.0;
  Estimator estimator = Estimator::MeanStd;
};

inline void check_quantile(double k) {
  if (!(k > 0.0 && k < 1.0)) {
    throw InvalidQuantile("K must lie strictly inside (0,1), got " + std::to_string(k));
  }
}

// Right-continuous K-quantile of the group's rewards: inf{x : F(x) >= K}.
// Implemented through the empirical CDF so it works for any reward values;
// for binary rewards it lands on 0 when p <= 1-K and on 1 otherwise.
inline double quantile_baseline(const RewardGroup& group, double k) {
  check_quantile(k);
  std::vector<double> sorted = group.rewards();
  std::sort(sorted.begin(), sorted.end());
  for (double v : sorted) {
    if (group.cdf(v) >= k) return v;
  }
  return sorted.back();  // F(max) = 1 >= K, unreachable
}

inline RegimeTag classify_regime(const RewardGroup& group, double k) {
  const double b = quantile_baseline(group, k);
  return RegimeTag{b == 0.0 ? Regime::Hard : Regime::Easy, 1.0 - k};
}

namespace detail {

inline double advantage_denominator(const RewardGroup& group, double eps_std) {
  if (eps_std < 0.0) {
    throw std::invalid_argument("eps_std must be >= 0, got " + std::to_string(eps_std));
  }
  const double denom = group.std_dev() + eps_std;
  if (denom == 0.0) {
    throw DivisionByZero("group std is 0 and eps_std is 0; rewards are all " +
                         std::to_string(group.rewards().front()));
  }
  return denom;
}

}  // namespace detail

// (R_i - b_K) / (std + eps). Subtracting a baseline that is exactly 0 or 1
// leaves one outcome class at exactly zero: failures on hard groups,
// successes on easy ones.
inline AdvantageVector advantage_quantile(const RewardGroup& group, double k, double eps_std) {
  const double b = quantile_baseline(group, k);
  const double denom = detail::advantage_denominator(group, eps_std);
  AdvantageVector out;
  out.baseline = b;
  out.estimator = Estimator::QuantileStd;
  out.values.reserve(group.rewards().size());
  for (double r : group.rewards()) out.values.push_back((r - b) / denom);
  return out;
}

// (R_i - p) / (std + eps), the group-mean baseline.
inline AdvantageVector advantage_mean(const RewardGroup& group, double eps_std) {
  const double p = group.success_rate();
  const double denom = detail::advantage_denominator(group, eps_std);
  AdvantageVector out;
  out.baseline = p;
  out.estimator = Estimator::MeanStd;
  out.values.reserve(group.rewards().size());
  for (double r : group.rewards()) out.values.push_back((r - p) / denom);
  return out;
}

// One-sided gates over the mean-baseline advantages.
//   PosMask: positives contribute only on hard groups; negatives always do.
//   NegMask: negatives contribute only on easy groups; positives always do.
// Unmasked entries are exactly the mean-baseline values.
inline AdvantageVector advantage_masked(const RewardGroup& group, double k, double eps_std,
                                        MaskSide which) {
  const bool hard = classify_regime(group, k).regime == Regime::Hard;
  AdvantageVector out = advantage_mean(group, eps_std);
  out.estimator = which == MaskSide::PosMask ? Estimator::PosMask : Estimator::NegMask;
  const auto& rewards = group.rewards();
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const bool positive = rewards[i] == 1.0;
    if (which == MaskSide::PosMask && positive && !hard) out.values[i] = 0.0;
    if (which == MaskSide::NegMask && !positive && hard) out.values[i] = 0.0;
  }
  return out;
}

inline AdvantageVector compute_advantage(const RewardGroup& group, Estimator estimator, double k,
                                         double eps_std) {
  switch (estimator) {
    case Estimator::MeanStd:
      return advantage_mean(group, eps_std);
    case Estimator::QuantileStd:
      return advantage_quantile(group, k, eps_std);
    case Estimator::PosMask:
      return advantage_masked(group, k, eps_std, MaskSide::PosMask);
    case Estimator::NegMask:
      return advantage_masked(group, k, eps_std, MaskSide::NegMask);
  }
  throw std::invalid_argument("unknown estimator");
}

}  // namespace qae
