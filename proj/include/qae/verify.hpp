#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "qae/advantage.hpp"
#include "qae/entropy.hpp"
#include "qae/policy.hpp"
#include "qae/reward_group.hpp"
#include "qae/rng.hpp"
#include "qae/surrogate.hpp"

namespace qae {

// Result of one randomized property suite. `failing_seed` reproduces the
// first failing instance when rerun with trials=1.
struct SuiteReport {
  std::string name;
  int trials = 0;
  int failures = 0;
  int outliers = 0;  // instances outside a tolerated-fraction window
  double worst_error = 0.0;
  double min_margin = std::numeric_limits<double>::infinity();
  std::uint64_t failing_seed = 0;
  bool has_failing_seed = false;

  bool passed() const { return failures == 0; }
};

namespace verify_detail {

// With one trial the base seed is the instance seed, so a reported seed
// can be replayed directly via --trials 1 --seed <value>.
inline std::uint64_t instance_seed(std::uint64_t base, int trials, int index) {
  return trials == 1 ? base : mix_seed(base, {static_cast<std::uint64_t>(index)});
}

inline void record_failure(SuiteReport& report, std::uint64_t seed) {
  if (report.failures == 0) {
    report.failing_seed = seed;
    report.has_failing_seed = true;
  }
  report.failures += 1;
}

// Random non-uniform flat-bandit policy with n in [2,64] actions and logit
// spread at least 0.01.
inline PolicyTable random_policy(Rng& rng, int min_actions = 2, int max_actions = 64,
                                 double min_spread = 0.01, double max_spread = 6.0) {
  const int n = min_actions +
                static_cast<int>(rng.uniform_int(
                    static_cast<std::uint64_t>(max_actions - min_actions + 1)));
  const double spread =
      min_spread * std::exp(rng.uniform() * std::log(max_spread / min_spread));
  std::vector<double> logits(static_cast<std::size_t>(n));
  for (double& z : logits) z = rng.uniform(0.0, spread);
  // Pin the extremes so the realized spread is exactly `spread`.
  logits[0] = 0.0;
  logits[static_cast<std::size_t>(n - 1)] = spread;
  return PolicyTable::flat_bandit(std::move(logits));
}

inline std::vector<double> random_action_rewards(Rng& rng, int n) {
  std::vector<double> r(static_cast<std::size_t>(n));
  bool any0 = false, any1 = false;
  for (double& v : r) {
    v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    (v == 1.0 ? any1 : any0) = true;
  }
  if (!any0) r[rng.uniform_int(r.size())] = 0.0;
  if (!any1) r[rng.uniform_int(r.size())] = 1.0;
  return r;
}

// Samples a G-response reward group by drawing actions from the policy and
// reading off their rewards.
inline RewardGroup sample_group(Rng& rng, const PolicyTable& policy,
                                std::span<const double> action_rewards, int group_size) {
  const std::vector<double> probs = policy.probs();
  std::vector<double> rewards(static_cast<std::size_t>(group_size));
  for (double& r : rewards) {
    r = action_rewards[static_cast<std::size_t>(rng.categorical(probs))];
  }
  return RewardGroup(std::move(rewards));
}

inline std::vector<double> unit_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(static_cast<double>(i) / 10.0);
  return grid;
}

}  // namespace verify_detail

// Two-regime extremality: over random non-uniform bandit instances, the
// quantile baseline's entropy forecast is the grid minimum on hard groups
// and the grid maximum on easy groups, with strict margin against every
// other grid point.
inline SuiteReport verify_prop2_extremality(int trials, std::uint64_t seed, double k = 0.4,
                                            double eta = 1e-2) {
  SuiteReport report;
  report.name = "prop2-extremality";
  report.trials = trials;
  const std::vector<double> grid = verify_detail::unit_grid();
  for (int i = 0; i < trials; ++i) {
    const std::uint64_t s = verify_detail::instance_seed(seed, trials, i);
    Rng rng(s);
    const PolicyTable policy = verify_detail::random_policy(rng);
    const std::vector<double> rewards =
        verify_detail::random_action_rewards(rng, policy.num_actions());
    const RewardGroup group = verify_detail::sample_group(rng, policy, rewards, 8);
    const TwoRegimeReport tr = verify_two_regime(policy, rewards, group, k, grid, eta);
    const double required_margin = 1e-12 * std::max(1.0, tr.c_q);
    const bool ok = tr.passed() && tr.min_margin > required_margin;
    if (!ok) verify_detail::record_failure(report, s);
    report.min_margin = std::min(report.min_margin, tr.min_margin - required_margin);
  }
  return report;
}

// Baseline monotonicity and affinity: F(b) strictly decreasing on the grid
// and reconstructible as F(0) - b*C to 1e-12 relative accuracy.
inline SuiteReport verify_baseline_monotonicity(int trials, std::uint64_t seed) {
  SuiteReport report;
  report.name = "baseline-monotonicity";
  report.trials = trials;
  const std::vector<double> grid = verify_detail::unit_grid();
  for (int i = 0; i < trials; ++i) {
    const std::uint64_t s = verify_detail::instance_seed(seed, trials, i);
    Rng rng(s);
    const PolicyTable policy = verify_detail::random_policy(rng);
    const std::vector<double> rewards =
        verify_detail::random_action_rewards(rng, policy.num_actions());
    const EntropyForecast at0 = entropy_covariance(policy, rewards, 0.0, 1e-2);
    const double tol = 1e-12 * std::max(1.0, std::abs(at0.f_q_of_b));
    bool ok = at0.c_q > 0.0;
    double prev = 0.0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const EntropyForecast fc = entropy_covariance(policy, rewards, grid[g], 1e-2);
      const double affine_err = std::abs(fc.f_q_of_b - (at0.f_q_of_b - grid[g] * at0.c_q));
      report.worst_error = std::max(report.worst_error,
                                    affine_err / std::max(1.0, std::abs(at0.f_q_of_b)));
      if (affine_err > tol) ok = false;
      if (g > 0 && !(fc.f_q_of_b < prev)) ok = false;
      prev = fc.f_q_of_b;
    }
    if (!ok) verify_detail::record_failure(report, s);
  }
  return report;
}

// First-order accuracy of the entropy forecast: halving eta shrinks
// |dH_actual - dH_pred| roughly 4x. An instance passes when both successive
// ratios over eta in {1e-2, 5e-3, 2.5e-3} land in [3.5, 4.5]; the suite
// passes when at least 95% of instances do.
inline SuiteReport verify_first_order_identity(int trials, std::uint64_t seed) {
  SuiteReport report;
  report.name = "first-order-identity";
  report.trials = trials;
  const double etas[3] = {1e-2, 5e-3, 2.5e-3};
  int failures = 0;
  std::uint64_t first_fail = 0;
  for (int i = 0; i < trials; ++i) {
    std::uint64_t s = verify_detail::instance_seed(seed, trials, i);
    // Draw until the first-order term is non-negligible, as the ratio test
    // is only meaningful there.
    PolicyTable policy = PolicyTable::flat_bandit({0.0, 1.0});
    std::vector<double> rewards;
    double b = 0.0;
    double f_q = 0.0;
    std::uint64_t draw_seed = s;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Rng rng(draw_seed);
      policy = verify_detail::random_policy(rng, 2, 16, 0.5, 4.0);
      rewards = verify_detail::random_action_rewards(rng, policy.num_actions());
      b = rng.uniform();
      f_q = entropy_covariance(policy, rewards, b, 1.0).f_q_of_b;
      if (std::abs(f_q) >= 1e-4) break;
      draw_seed = splitmix64(draw_seed);
    }
    std::vector<double> adv(rewards.size());
    for (std::size_t y = 0; y < rewards.size(); ++y) adv[y] = rewards[y] - b;

    const double h0 = policy_entropy(policy);
    double err[3];
    for (int e = 0; e < 3; ++e) {
      const double predicted = -etas[e] * f_q;
      const double actual = policy_entropy(one_step_update(policy, adv, etas[e])) - h0;
      err[e] = std::abs(actual - predicted);
    }
    const double r1 = err[0] / err[1];
    const double r2 = err[1] / err[2];
    const bool ok = r1 >= 3.5 && r1 <= 4.5 && r2 >= 3.5 && r2 <= 4.5;
    if (!ok) {
      if (failures == 0) first_fail = s;
      ++failures;
    }
    report.worst_error = std::max({report.worst_error, std::abs(r1 - 4.0), std::abs(r2 - 4.0)});
  }
  // 5% of instances may sit outside the window (degenerate curvature).
  const int allowed = trials - (trials * 95 + 99) / 100;
  report.outliers = failures;
  report.failures = failures > allowed ? failures : 0;
  if (report.failures > 0) {
    report.failing_seed = first_fail;
    report.has_failing_seed = true;
  }
  return report;
}

namespace verify_detail {

// Token-normalized unit-advantage scores over the positive / negative
// responses of a rollout; the independent side of the equivalence checks.
inline std::pair<double, double> mean_scores(const GroupRollout& rollout,
                                             std::span<const double> rewards,
                                             const ClipSpec& clip) {
  double s_pos = 0.0, s_neg = 0.0;
  int n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < rollout.ratios.size(); ++i) {
    double score_pos = 0.0, score_neg = 0.0;
    for (double ratio : rollout.ratios[i]) {
      score_pos += f_pos_unit(ratio, clip);
      score_neg += f_neg_unit(ratio, clip);
    }
    const double len = static_cast<double>(rollout.ratios[i].size());
    if (rewards[i] == 1.0) {
      s_pos += score_pos / len;
      ++n_pos;
    } else {
      s_neg += score_neg / len;
      ++n_neg;
    }
  }
  return {n_pos > 0 ? s_pos / n_pos : 0.0, n_neg > 0 ? s_neg / n_neg : 0.0};
}

}  // namespace verify_detail

// Objective equivalences at eps_std = 0 on equal-length rollouts:
//  - quantile advantages through the token-level surrogate equal the gated
//    discriminative form;
//  - mean advantages equal the symmetric sqrt(p(1-p)) form.
inline SuiteReport verify_prop1_equivalence(int trials, std::uint64_t seed) {
  SuiteReport report;
  report.name = "prop1-equivalence";
  report.trials = trials;
  for (int i = 0; i < trials; ++i) {
    const std::uint64_t s = verify_detail::instance_seed(seed, trials, i);
    Rng rng(s);
    const int group_size = 2 + static_cast<int>(rng.uniform_int(11));
    const int successes = 1 + static_cast<int>(rng.uniform_int(
                                  static_cast<std::uint64_t>(group_size - 1)));
    std::vector<double> rewards(static_cast<std::size_t>(group_size), 0.0);
    for (int j = 0; j < successes; ++j) rewards[static_cast<std::size_t>(j)] = 1.0;
    // Shuffle so positives are not always first.
    for (std::size_t j = rewards.size(); j > 1; --j) {
      std::swap(rewards[j - 1], rewards[rng.uniform_int(j)]);
    }
    const RewardGroup group{std::vector<double>(rewards)};
    const int length = 1 + static_cast<int>(rng.uniform_int(5));
    const ClipSpec clip(rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5));
    const double k = rng.uniform(0.1, 0.9);
    const double p = group.success_rate();

    GroupRollout rollout;
    rollout.ratios.resize(static_cast<std::size_t>(group_size));
    for (auto& row : rollout.ratios) {
      row.resize(static_cast<std::size_t>(length));
      for (double& ratio : row) ratio = std::exp(rng.uniform(-0.7, 0.6));
    }
    const auto [s_pos, s_neg] = verify_detail::mean_scores(rollout, rewards, clip);

    rollout.advantages = advantage_quantile(group, k, 0.0).values;
    const double lhs_q = dapo_loss(rollout, clip);
    const double rhs_q = quantile_discriminative(p, k, s_pos, s_neg);

    rollout.advantages = advantage_mean(group, 0.0).values;
    const double lhs_m = dapo_loss(rollout, clip);
    const double rhs_m = grpo_discriminative(p, s_pos, s_neg);

    const double pairs[2][2] = {{lhs_q, rhs_q}, {lhs_m, rhs_m}};
    bool ok = true;
    for (const auto& pair : pairs) {
      const double rel = std::abs(pair[0] - pair[1]) /
                         std::max({1.0, std::abs(pair[0]), std::abs(pair[1])});
      report.worst_error = std::max(report.worst_error, rel);
      if (rel > 1e-10) ok = false;
    }
    if (!ok) verify_detail::record_failure(report, s);
  }
  return report;
}

// Analytic surrogate gradients against central finite differences, on
// instances whose ratios stay clear of the clip boundaries.
inline SuiteReport verify_gradients(int trials, std::uint64_t seed) {
  SuiteReport report;
  report.name = "gradient-check";
  report.trials = trials;
  for (int i = 0; i < trials; ++i) {
    const std::uint64_t s = verify_detail::instance_seed(seed, trials, i);
    Rng rng(s);
    const bool flat = rng.uniform() < 0.7;
    const ClipSpec clip(rng.uniform(0.15, 0.4), rng.uniform(0.15, 0.4));

    PolicyTable old_policy = PolicyTable::flat_bandit({0.0, 0.0});
    PolicyTable cur_policy = old_policy;
    std::vector<Response> responses;
    const int group_size = 2 + static_cast<int>(rng.uniform_int(7));

    for (int attempt = 0;; ++attempt) {
      if (flat) {
        const int n = 2 + static_cast<int>(rng.uniform_int(7));
        std::vector<double> old_logits(static_cast<std::size_t>(n));
        std::vector<double> cur_logits(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) {
          old_logits[static_cast<std::size_t>(j)] = rng.uniform(-1.0, 1.0);
          cur_logits[static_cast<std::size_t>(j)] =
              old_logits[static_cast<std::size_t>(j)] + rng.uniform(-0.25, 0.25);
        }
        old_policy = PolicyTable::flat_bandit(std::move(old_logits));
        cur_policy = PolicyTable::flat_bandit(std::move(cur_logits));
      } else {
        const int vocab = 2 + static_cast<int>(rng.uniform_int(3));
        const int length = 1 + static_cast<int>(rng.uniform_int(3));
        old_policy = PolicyTable::autoregressive(vocab, length);
        cur_policy = PolicyTable::autoregressive(vocab, length);
      }
      responses.clear();
      for (int g = 0; g < group_size; ++g) responses.push_back(old_policy.sample(rng));
      if (!flat) {
        // Perturb the visited tables of both policies.
        for (const Response& resp : responses) {
          std::uint64_t key = PolicyTable::empty_prefix();
          for (int tok : resp.tokens) {
            for (double& z : old_policy.mutable_prefix_logits(key)) {
              z += rng.uniform(-0.5, 0.5);
            }
            for (double& z : cur_policy.mutable_prefix_logits(key)) {
              z += rng.uniform(-0.5, 0.5);
            }
            key = old_policy.extend_prefix(key, tok);
          }
        }
      }
      // Stay away from the clip kinks so the objective is differentiable.
      AdvantageVector probe;
      probe.values.assign(responses.size(), 1.0);
      const GroupRollout rollout = make_rollout(cur_policy, old_policy, responses, probe);
      bool clear = true;
      for (const auto& row : rollout.ratios) {
        for (double ratio : row) {
          if (std::abs(ratio - (1.0 + clip.eps_high)) < 1e-3 ||
              std::abs(ratio - (1.0 - clip.eps_low)) < 1e-3) {
            clear = false;
          }
        }
      }
      if (clear || attempt > 50) break;
    }

    AdvantageVector adv;
    adv.values.resize(responses.size());
    for (double& a : adv.values) {
      a = rng.uniform(-2.0, 2.0);
      if (std::abs(a) < 0.05) a = 0.0;  // exercise the zero-advantage path
    }
    bool any_nonzero = false;
    for (double a : adv.values) any_nonzero |= a != 0.0;
    if (!any_nonzero) adv.values[0] = 1.0;

    const PolicyGradient grad = surrogate_gradient(cur_policy, old_policy, responses, adv, clip);

    // Central differences on every logit the gradient claims to cover.
    const double h = 1e-6;
    double num = 0.0, norm_analytic = 0.0, norm_fd = 0.0;
    auto fd_at = [&](PolicyTable& probe_policy, double* slot, double analytic) {
      const double saved = *slot;
      *slot = saved + h;
      const double up = dapo_loss_at(probe_policy, old_policy, responses, adv, clip);
      *slot = saved - h;
      const double down = dapo_loss_at(probe_policy, old_policy, responses, adv, clip);
      *slot = saved;
      const double fd = (up - down) / (2.0 * h);
      num += (analytic - fd) * (analytic - fd);
      norm_analytic += analytic * analytic;
      norm_fd += fd * fd;
    };
    PolicyTable probe_policy = cur_policy;
    if (flat) {
      for (std::size_t j = 0; j < probe_policy.logits().size(); ++j) {
        fd_at(probe_policy, &probe_policy.mutable_logits()[j], grad.flat[j]);
      }
    } else {
      for (const auto& [key, row] : grad.tables) {
        std::vector<double>& slot_row = probe_policy.mutable_prefix_logits(key);
        for (std::size_t j = 0; j < row.size(); ++j) {
          fd_at(probe_policy, &slot_row[j], row[j]);
        }
      }
    }
    const double rel =
        std::sqrt(num) / std::max(1e-8, std::sqrt(std::max(norm_analytic, norm_fd)));
    report.worst_error = std::max(report.worst_error, rel);
    if (!(rel <= 1e-6)) verify_detail::record_failure(report, s);
  }
  return report;
}

}  // namespace qae
