#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qae/advantage.hpp"
#include "qae/errors.hpp"
#include "qae/policy.hpp"
#include "qae/rng.hpp"

namespace qae {

// Policies below this covariance floor are treated as uniform; the
// two-regime statements only claim strictness above it.
inline constexpr double kUniformityFloor = 1e-12;

// First-order entropy forecast for one softmax update at baseline b:
//   F(b) = Cov_{y~pi}(log pi(y), pi(y) (r(y) - b)),  dH ~ -eta * F(b).
// F is affine in b with slope -C, C = Cov(log pi, pi).
struct EntropyForecast {
  double f_q_of_b = 0.0;
  double c_q = 0.0;
  double predicted_delta_h = 0.0;
  double eta = 0.0;
};

namespace detail {

// Covariance of two per-action statistics under y ~ pi, centered form.
inline double pi_covariance(std::span<const double> pi, std::span<const double> x,
                            std::span<const double> y) {
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    mx += pi[i] * x[i];
    my += pi[i] * y[i];
  }
  double cov = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    cov += pi[i] * (x[i] - mx) * (y[i] - my);
  }
  return cov;
}

inline void log_probs_into(std::span<const double> logits, std::vector<double>& logp) {
  double m = logits[0];
  for (double z : logits) m = std::max(m, z);
  double total = 0.0;
  for (double z : logits) total += std::exp(z - m);
  const double log_total = std::log(total);
  logp.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) logp[i] = (logits[i] - m) - log_total;
}

inline void require_flat(const PolicyTable& policy, const char* op) {
  if (!policy.is_flat()) {
    throw ModeUnsupported(std::string(op) + " supports flat-bandit policies only; "
                          "reduce autoregressive policies to bandits first");
  }
}

}  // namespace detail

// Exact Shannon entropy for flat bandits. Autoregressive policies report the
// per-position average of token-distribution entropies, exact by prefix-tree
// enumeration when the trajectory space is small enough.
inline double policy_entropy(const PolicyTable& policy) {
  if (policy.is_flat()) return softmax_entropy(policy.logits());
  double trajectories = 1.0;
  for (int t = 0; t < policy.max_length(); ++t) trajectories *= policy.vocab_size();
  if (trajectories > 4096.0) {
    throw std::invalid_argument(
        "trajectory space too large for exact enumeration; pass an rng to sample");
  }
  // Sum over positions of E_{prefix}[H(pi(.|prefix))], averaged over positions.
  double total = 0.0;
  std::vector<std::pair<std::uint64_t, double>> layer{{PolicyTable::empty_prefix(), 1.0}};
  std::vector<std::pair<std::uint64_t, double>> next;
  std::vector<double> probs;
  for (int t = 0; t < policy.max_length(); ++t) {
    next.clear();
    for (const auto& [key, weight] : layer) {
      const auto& logits = policy.prefix_logits(key);
      total += weight * softmax_entropy(logits);
      if (t + 1 < policy.max_length()) {
        softmax_into(logits, probs);
        for (int tok = 0; tok < policy.vocab_size(); ++tok) {
          next.emplace_back(policy.extend_prefix(key, tok), weight * probs[tok]);
        }
      }
    }
    layer.swap(next);
  }
  return total / static_cast<double>(policy.max_length());
}

// Sampling fallback for large autoregressive spaces; exact otherwise.
inline double policy_entropy(const PolicyTable& policy, Rng& rng, int num_samples = 2048) {
  if (policy.is_flat()) return policy_entropy(policy);
  double trajectories = 1.0;
  for (int t = 0; t < policy.max_length(); ++t) trajectories *= policy.vocab_size();
  if (trajectories <= 4096.0) return policy_entropy(policy);
  double total = 0.0;
  for (int s = 0; s < num_samples; ++s) {
    total += policy.response_token_entropy(policy.sample(rng));
  }
  return total / static_cast<double>(num_samples);
}

// Strictly positive for non-uniform policies: log u and u are co-monotone.
inline double cov_logpi_pi(const PolicyTable& policy) {
  detail::require_flat(policy, "cov_logpi_pi");
  const std::vector<double> pi = policy.probs();
  std::vector<double> logp;
  detail::log_probs_into(policy.logits(), logp);
  return detail::pi_covariance(pi, logp, pi);
}

// Evaluates the covariance term F(b) and the entropy forecast -eta*F(b)
// for per-action rewards and a scalar baseline b in [0,1].
inline EntropyForecast entropy_covariance(const PolicyTable& policy,
                                          std::span<const double> action_rewards, double b,
                                          double eta) {
  detail::require_flat(policy, "entropy_covariance");
  if (action_rewards.size() != policy.logits().size()) {
    throw std::invalid_argument("one reward per action required");
  }
  if (!(b >= 0.0 && b <= 1.0)) {
    throw std::invalid_argument("baseline must lie in [0,1], got " + std::to_string(b));
  }
  const std::vector<double> pi = policy.probs();
  std::vector<double> logp;
  detail::log_probs_into(policy.logits(), logp);
  std::vector<double> weighted(pi.size());
  for (std::size_t i = 0; i < pi.size(); ++i) weighted[i] = pi[i] * (action_rewards[i] - b);
  EntropyForecast out;
  out.f_q_of_b = detail::pi_covariance(pi, logp, weighted);
  out.c_q = detail::pi_covariance(pi, logp, pi);
  out.eta = eta;
  out.predicted_delta_h = -eta * out.f_q_of_b;
  return out;
}

// One idealized first-order softmax update: z_y += eta * pi(y) * A(y).
inline PolicyTable one_step_update(const PolicyTable& policy,
                                   std::span<const double> action_advantages, double eta) {
  detail::require_flat(policy, "one_step_update");
  if (action_advantages.size() != policy.logits().size()) {
    throw std::invalid_argument("one advantage per action required");
  }
  for (double a : action_advantages) {
    if (!std::isfinite(a)) throw std::invalid_argument("advantages must be finite");
  }
  const std::vector<double> pi = policy.probs();
  std::vector<double> z = policy.logits();
  for (std::size_t y = 0; y < z.size(); ++y) z[y] += eta * pi[y] * action_advantages[y];
  return PolicyTable::flat_bandit(std::move(z));
}

// Grid evaluation of the two-regime claim: the quantile baseline's forecast
// is the grid minimum on hard groups and the grid maximum on easy ones, and
// the forecast is strictly increasing in b.
struct TwoRegimeReport {
  Regime regime = Regime::Hard;
  double b_k = 0.0;
  double c_q = 0.0;
  std::vector<double> grid;
  std::vector<double> predicted;  // dH forecast per grid baseline
  bool extremal_ok = false;
  bool monotone_ok = false;
  double min_margin = 0.0;  // smallest |dH(b) - dH(b_k)| over b != b_k

  bool passed() const { return extremal_ok && monotone_ok; }
};

inline TwoRegimeReport verify_two_regime(const PolicyTable& policy,
                                         std::span<const double> action_rewards,
                                         const RewardGroup& group, double k,
                                         std::span<const double> baseline_grid, double eta) {
  detail::require_flat(policy, "verify_two_regime");
  check_quantile(k);
  bool has_zero = false, has_one = false;
  for (double b : baseline_grid) {
    if (b == 0.0) has_zero = true;
    if (b == 1.0) has_one = true;
    if (!(b >= 0.0 && b <= 1.0)) throw std::invalid_argument("grid baselines must lie in [0,1]");
  }
  if (!has_zero || !has_one) {
    throw std::invalid_argument("baseline grid must include 0 and 1");
  }

  TwoRegimeReport report;
  report.c_q = cov_logpi_pi(policy);
  if (report.c_q <= kUniformityFloor) {
    throw UniformPolicy("policy is uniform up to tolerance (C_q = " +
                        std::to_string(report.c_q) + ")");
  }
  report.regime = classify_regime(group, k).regime;
  report.b_k = quantile_baseline(group, k);
  report.grid.assign(baseline_grid.begin(), baseline_grid.end());
  report.predicted.reserve(report.grid.size());
  for (double b : report.grid) {
    report.predicted.push_back(entropy_covariance(policy, action_rewards, b, eta)
                                   .predicted_delta_h);
  }
  const double at_bk =
      entropy_covariance(policy, action_rewards, report.b_k, eta).predicted_delta_h;

  report.extremal_ok = true;
  report.min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < report.grid.size(); ++i) {
    if (report.grid[i] == report.b_k) continue;
    const bool ok = report.regime == Regime::Hard ? at_bk <= report.predicted[i]
                                                  : at_bk >= report.predicted[i];
    report.extremal_ok = report.extremal_ok && ok;
    report.min_margin = std::min(report.min_margin, std::abs(report.predicted[i] - at_bk));
  }

  report.monotone_ok = true;
  for (std::size_t i = 0; i + 1 < report.grid.size(); ++i) {
    if (report.grid[i] < report.grid[i + 1] && !(report.predicted[i] < report.predicted[i + 1])) {
      report.monotone_ok = false;
    }
    if (report.grid[i] > report.grid[i + 1] && !(report.predicted[i] > report.predicted[i + 1])) {
      report.monotone_ok = false;
    }
  }
  return report;
}

}  // namespace qae
