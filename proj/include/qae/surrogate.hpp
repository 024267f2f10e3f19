#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "qae/advantage.hpp"
#include "qae/errors.hpp"
#include "qae/policy.hpp"

namespace qae {

// Asymmetric clip range (1 - eps_low, 1 + eps_high).
struct ClipSpec {
  double eps_low = 0.2;
  double eps_high = 0.28;

  ClipSpec() = default;
  ClipSpec(double lo, double hi) : eps_low(lo), eps_high(hi) {
    if (!(eps_low > 0.0) || !(eps_high > 0.0)) {
      throw std::invalid_argument("clip epsilons must be positive");
    }
  }
};

// One group's importance ratios, per response and per token, with the
// response advantage broadcast over its tokens.
struct GroupRollout {
  std::vector<std::vector<double>> ratios;
  std::vector<double> advantages;

  int total_tokens() const {
    int z = 0;
    for (const auto& r : ratios) z += static_cast<int>(r.size());
    return z;
  }
};

// min(x*A, clip(x, 1-eps_low, 1+eps_high)*A). Collapses to
//   A * min(x, 1+eps_high)  for A > 0,
//   A * max(x, 1-eps_low)   for A < 0,
//   0                       for A = 0.
inline double f_clip(double ratio, double advantage, const ClipSpec& clip) {
  if (!(ratio > 0.0)) {
    throw NonPositiveRatio("probability ratio must be positive, got " + std::to_string(ratio));
  }
  if (advantage == 0.0) return 0.0;
  if (advantage > 0.0) return advantage * std::min(ratio, 1.0 + clip.eps_high);
  return advantage * std::max(ratio, 1.0 - clip.eps_low);
}

// Positive/negative unit-advantage scores the clipped surrogate factors into.
inline double f_pos_unit(double ratio, const ClipSpec& clip) {
  return std::min(ratio, 1.0 + clip.eps_high);
}
inline double f_neg_unit(double ratio, const ClipSpec& clip) {
  return std::max(ratio, 1.0 - clip.eps_low);
}

// Token-level-normalized clipped objective for one group:
// (1/Z) * sum_i sum_t f_clip(r_it, A_i), with Z the total token count.
inline double dapo_loss(const GroupRollout& rollout, const ClipSpec& clip) {
  if (rollout.ratios.empty()) throw EmptyGroup("rollout has no responses");
  if (rollout.ratios.size() != rollout.advantages.size()) {
    throw std::invalid_argument("rollout ratios/advantages size mismatch");
  }
  double sum = 0.0;
  int z = 0;
  for (std::size_t i = 0; i < rollout.ratios.size(); ++i) {
    if (rollout.ratios[i].empty()) throw EmptyGroup("response has no tokens");
    for (double r : rollout.ratios[i]) sum += f_clip(r, rollout.advantages[i], clip);
    z += static_cast<int>(rollout.ratios[i].size());
  }
  return sum / static_cast<double>(z);
}

inline void check_p_interior(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DegenerateP("success rate must lie strictly inside (0,1), got " + std::to_string(p));
  }
}

// Symmetric-weight decomposition of the mean-baseline objective:
// sqrt(p(1-p)) * (s_pos - s_neg).
inline double grpo_discriminative(double p, double s_pos, double s_neg) {
  check_p_interior(p);
  return std::sqrt(p * (1.0 - p)) * (s_pos - s_neg);
}

// Hard iff p <= 1-K, evaluated as p + K <= 1 so that decimal boundaries
// (where p and 1-K denote the same real number but round differently)
// resolve the same way as the right-continuous quantile rule.
inline bool hard_regime(double p, double k) {
  check_quantile(k);
  return p + k <= 1.0;
}

// Quantile-gated decomposition: only one side of the objective survives,
// with the symmetric weight replaced by a monotone one.
//   hard (p <= 1-K):  sqrt(p/(1-p)) * s_pos
//   easy (p >  1-K): -sqrt((1-p)/p) * s_neg
inline double quantile_discriminative(double p, double k, double s_pos, double s_neg) {
  check_p_interior(p);
  if (hard_regime(p, k)) return std::sqrt(p / (1.0 - p)) * s_pos;
  return -std::sqrt((1.0 - p) / p) * s_neg;
}

// One-sided ablations: gate only the positive term (PosMask) or only the
// negative term (NegMask), leaving the other side always active.
inline double masked_discriminative(double p, double k, double s_pos, double s_neg,
                                    MaskSide which) {
  check_p_interior(p);
  const bool hard = hard_regime(p, k);
  const double pos_term = std::sqrt(p / (1.0 - p)) * s_pos;
  const double neg_term = std::sqrt((1.0 - p) / p) * s_neg;
  if (which == MaskSide::PosMask) return (hard ? pos_term : 0.0) - neg_term;
  return pos_term - (hard ? 0.0 : neg_term);
}

// ---------------------------------------------------------------------------
// Policy-bound evaluation: the same objective as a function of the current
// policy's logits, which is what the analytic gradient differentiates.
// ---------------------------------------------------------------------------

// Gradient with respect to a policy's logits, laid out like the policy:
// a flat vector for bandits, a per-prefix table map for autoregressive.
struct PolicyGradient {
  std::vector<double> flat;
  std::unordered_map<std::uint64_t, std::vector<double>> tables;
};

namespace detail {

template <typename PerToken>
void walk_rollout(const PolicyTable& current, const PolicyTable& old,
                  const std::vector<Response>& responses, std::span<const double> advantages,
                  PerToken&& per_token) {
  if (responses.empty()) throw EmptyGroup("rollout has no responses");
  if (responses.size() != advantages.size()) {
    throw std::invalid_argument("responses/advantages size mismatch");
  }
  std::vector<double> cur_probs;
  std::vector<double> old_probs;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const Response& resp = responses[i];
    if (resp.tokens.empty()) throw EmptyGroup("response has no tokens");
    std::uint64_t key = PolicyTable::empty_prefix();
    for (int tok : resp.tokens) {
      if (current.is_flat()) {
        softmax_into(current.logits(), cur_probs);
        softmax_into(old.logits(), old_probs);
      } else {
        softmax_into(current.prefix_logits(key), cur_probs);
        softmax_into(old.prefix_logits(key), old_probs);
        key = current.extend_prefix(key, tok);
      }
      per_token(i, key, tok, cur_probs, old_probs, advantages[i]);
    }
  }
}

}  // namespace detail

// Ratios of current to old policy along each sampled response.
inline GroupRollout make_rollout(const PolicyTable& current, const PolicyTable& old,
                                 const std::vector<Response>& responses,
                                 const AdvantageVector& advantages) {
  GroupRollout rollout;
  rollout.advantages = advantages.values;
  rollout.ratios.resize(responses.size());
  detail::walk_rollout(current, old, responses, advantages.values,
                       [&](std::size_t i, std::uint64_t, int tok, const std::vector<double>& cur,
                           const std::vector<double>& oldp, double) {
                         rollout.ratios[i].push_back(cur[static_cast<std::size_t>(tok)] /
                                                     oldp[static_cast<std::size_t>(tok)]);
                       });
  return rollout;
}

inline double dapo_loss_at(const PolicyTable& current, const PolicyTable& old,
                           const std::vector<Response>& responses,
                           const AdvantageVector& advantages, const ClipSpec& clip) {
  return dapo_loss(make_rollout(current, old, responses, advantages), clip);
}

// Analytic gradient of dapo_loss_at with respect to the current policy's
// logits. At a clip boundary the unclipped branch is taken, matching the
// min/max evaluation order, so the result is deterministic everywhere.
inline PolicyGradient surrogate_gradient(const PolicyTable& current, const PolicyTable& old,
                                         const std::vector<Response>& responses,
                                         const AdvantageVector& advantages,
                                         const ClipSpec& clip) {
  PolicyGradient grad;
  if (current.is_flat()) {
    grad.flat.assign(current.logits().size(), 0.0);
  }
  int z = 0;
  for (const Response& r : responses) z += r.length();
  const double inv_z = 1.0 / static_cast<double>(z);

  detail::walk_rollout(
      current, old, responses, advantages.values,
      [&](std::size_t, std::uint64_t next_key, int tok, const std::vector<double>& cur,
          const std::vector<double>& oldp, double adv) {
        if (adv == 0.0) return;
        const double ratio =
            cur[static_cast<std::size_t>(tok)] / oldp[static_cast<std::size_t>(tok)];
        double df;  // d f_clip / d ratio
        if (adv > 0.0) {
          df = ratio <= 1.0 + clip.eps_high ? adv : 0.0;
        } else {
          df = ratio >= 1.0 - clip.eps_low ? adv : 0.0;
        }
        if (df == 0.0) return;
        // d ratio / d z_j = ratio * (1{j==tok} - pi_cur(j))
        std::vector<double>* row;
        if (current.is_flat()) {
          row = &grad.flat;
        } else {
          // next_key is the prefix extended by tok; recover the table key
          // of the context the token was drawn from.
          const std::uint64_t ctx =
              (next_key - static_cast<std::uint64_t>(tok + 1)) /
              static_cast<std::uint64_t>(current.vocab_size() + 1);
          auto [it, inserted] = grad.tables.try_emplace(ctx);
          if (inserted) it->second.assign(cur.size(), 0.0);
          row = &it->second;
        }
        const double scale = inv_z * df * ratio;
        for (std::size_t j = 0; j < cur.size(); ++j) {
          (*row)[j] -= scale * cur[j];
        }
        (*row)[static_cast<std::size_t>(tok)] += scale;
      });
  return grad;
}

// Ascent step on the surrogate: logits += eta * gradient.
inline PolicyTable apply_gradient_step(const PolicyTable& policy, const PolicyGradient& grad,
                                       double eta) {
  if (policy.is_flat()) {
    std::vector<double> z = policy.logits();
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += eta * grad.flat[j];
    return PolicyTable::flat_bandit(std::move(z));
  }
  PolicyTable updated = policy;
  for (const auto& [key, row] : grad.tables) {
    std::vector<double>& z = updated.mutable_prefix_logits(key);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += eta * row[j];
  }
  return updated;
}

}  // namespace qae
