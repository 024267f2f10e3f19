#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "qae/advantage.hpp"
#include "qae/rng.hpp"
#include "qae/surrogate.hpp"

using Catch::Approx;
using namespace qae;

namespace {

std::vector<RewardGroup> all_binary_groups(int max_size) {
  std::vector<RewardGroup> out;
  for (int g_size = 2; g_size <= max_size; ++g_size) {
    for (unsigned mask = 0; mask < (1u << g_size); ++mask) {
      std::vector<double> rewards(static_cast<std::size_t>(g_size));
      for (int i = 0; i < g_size; ++i) {
        rewards[static_cast<std::size_t>(i)] = (mask >> i) & 1u ? 1.0 : 0.0;
      }
      out.emplace_back(std::move(rewards));
    }
  }
  return out;
}

const std::vector<double> kQuantileGrid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

}  // namespace

TEST_CASE("quantile baseline thresholds on the success rate") {
  CHECK(quantile_baseline(make_reward_group({1, 0, 0, 0}), 0.4) == 0.0);  // p=0.25 <= 0.6
  CHECK(quantile_baseline(make_reward_group({1, 1, 1, 0}), 0.4) == 1.0);  // p=0.75 >  0.6
  // p exactly at the threshold: F(0) = 1-p = K triggers the infimum at 0.
  CHECK(quantile_baseline(make_reward_group({1, 1, 1, 0, 0}), 0.4) == 0.0);
}

TEST_CASE("quantile baseline rejects K outside (0,1)") {
  const RewardGroup g = make_reward_group({1, 0});
  CHECK_THROWS_AS(quantile_baseline(g, 0.0), InvalidQuantile);
  CHECK_THROWS_AS(quantile_baseline(g, 1.0), InvalidQuantile);
  CHECK_THROWS_AS(quantile_baseline(g, -0.2), InvalidQuantile);
  CHECK_THROWS_AS(quantile_baseline(g, 1.5), InvalidQuantile);
  CHECK_THROWS_AS(classify_regime(g, 0.0), InvalidQuantile);
}

TEST_CASE("quantile baseline agrees with the closed-form threshold rule") {
  // Exhaustive over binary groups and a K grid. The oracle evaluates the
  // p <= 1-K rule on the failure count, (G-j) >= K*G, which keeps decimal
  // boundaries (p and 1-K naming the same real) on the Hard side instead of
  // letting the 1-K rounding flip them.
  for (const RewardGroup& group : all_binary_groups(12)) {
    for (double k : kQuantileGrid) {
      const double via_cdf = quantile_baseline(group, k);
      const double g_size = static_cast<double>(group.size());
      const bool closed_hard = static_cast<double>(group.failures()) >= k * g_size;
      REQUIRE(via_cdf == (closed_hard ? 0.0 : 1.0));
      const RegimeTag tag = classify_regime(group, k);
      REQUIRE((tag.regime == Regime::Hard) == (via_cdf == 0.0));
      REQUIRE(tag.threshold == 1.0 - k);
      // The p-only predicate used by the discriminative forms agrees too.
      REQUIRE(hard_regime(group.success_rate(), k) == closed_hard);
    }
  }
}

TEST_CASE("regime classification with boundary belonging to Hard") {
  CHECK(classify_regime(make_reward_group({1, 0, 0, 0}), 0.4).regime == Regime::Hard);
  CHECK(classify_regime(make_reward_group({1, 1, 1, 0}), 0.4).regime == Regime::Easy);
  // p = 0.6 with K = 0.4 sits exactly on the threshold.
  CHECK(classify_regime(make_reward_group({1, 1, 1, 0, 0}), 0.4).regime == Regime::Hard);
}

TEST_CASE("quantile advantages: hard groups reinforce successes only") {
  const AdvantageVector adv = advantage_quantile(make_reward_group({1, 0, 0, 0}), 0.4, 0.0);
  CHECK(adv.baseline == 0.0);
  CHECK(adv.values[0] == Approx(2.3094011).epsilon(1e-7));
  CHECK(adv.values[1] == 0.0);
  CHECK(adv.values[2] == 0.0);
  CHECK(adv.values[3] == 0.0);
}

TEST_CASE("quantile advantages: easy groups penalize failures only") {
  const AdvantageVector adv = advantage_quantile(make_reward_group({1, 1, 1, 0}), 0.4, 0.0);
  CHECK(adv.baseline == 1.0);
  CHECK(adv.values[0] == 0.0);
  CHECK(adv.values[1] == 0.0);
  CHECK(adv.values[2] == 0.0);
  CHECK(adv.values[3] == Approx(-2.3094011).epsilon(1e-7));
}

TEST_CASE("quantile advantages: degenerate group with std floor is all zero") {
  const AdvantageVector adv = advantage_quantile(make_reward_group({1, 1, 1, 1}), 0.4, 1e-6);
  for (double v : adv.values) CHECK(v == 0.0);
}

TEST_CASE("zero std with zero floor raises DivisionByZero") {
  CHECK_THROWS_AS(advantage_quantile(make_reward_group({1, 1, 1, 1}), 0.4, 0.0),
                  DivisionByZero);
  CHECK_THROWS_AS(advantage_mean(make_reward_group({0, 0}), 0.0), DivisionByZero);
}

TEST_CASE("mean advantages match the standardized closed forms") {
  const AdvantageVector adv = advantage_mean(make_reward_group({1, 0, 0, 0}), 0.0);
  CHECK(adv.values[0] == Approx(1.7320508).epsilon(1e-7));
  CHECK(adv.values[1] == Approx(-0.5773503).epsilon(1e-7));
  CHECK(adv.values[2] == Approx(-0.5773503).epsilon(1e-7));
  CHECK(adv.values[3] == Approx(-0.5773503).epsilon(1e-7));

  const AdvantageVector sym = advantage_mean(make_reward_group({1, 1, 0, 0}), 0.0);
  CHECK(sym.values[0] == 1.0);
  CHECK(sym.values[1] == 1.0);
  CHECK(sym.values[2] == -1.0);
  CHECK(sym.values[3] == -1.0);

  const AdvantageVector degenerate = advantage_mean(make_reward_group({0, 0, 0, 0}), 1e-6);
  for (double v : degenerate.values) CHECK(v == 0.0);
}

TEST_CASE("mean-baseline recovery identity") {
  for (const RewardGroup& group : all_binary_groups(10)) {
    if (group.degenerate()) continue;
    const AdvantageVector adv = advantage_mean(group, 0.0);
    const double p = group.success_rate();
    const double s = std::sqrt(p * (1.0 - p));
    for (std::size_t i = 0; i < adv.values.size(); ++i) {
      if (group.rewards()[i] == 1.0) {
        REQUIRE(std::abs(adv.values[i] * s - (1.0 - p)) <= 1e-12);
      } else {
        REQUIRE(std::abs(adv.values[i] * s + p) <= 1e-12);
      }
    }
  }
}

TEST_CASE("masked variants gate exactly one side") {
  // Easy group: positives masked, failure keeps its mean-baseline value.
  const AdvantageVector pos_easy =
      advantage_masked(make_reward_group({1, 1, 1, 0}), 0.4, 0.0, MaskSide::PosMask);
  CHECK(pos_easy.values[0] == 0.0);
  CHECK(pos_easy.values[1] == 0.0);
  CHECK(pos_easy.values[2] == 0.0);
  CHECK(pos_easy.values[3] == Approx(-1.7320508).epsilon(1e-7));

  // Hard group: negatives masked, success keeps its mean-baseline value.
  const AdvantageVector neg_hard =
      advantage_masked(make_reward_group({1, 0, 0, 0}), 0.4, 0.0, MaskSide::NegMask);
  CHECK(neg_hard.values[0] == Approx(1.7320508).epsilon(1e-7));
  CHECK(neg_hard.values[1] == 0.0);
  CHECK(neg_hard.values[2] == 0.0);
  CHECK(neg_hard.values[3] == 0.0);

  // Hard group leaves both sides of the positive mask active.
  const AdvantageVector pos_hard =
      advantage_masked(make_reward_group({1, 0, 0, 0}), 0.4, 0.0, MaskSide::PosMask);
  const AdvantageVector mean = advantage_mean(make_reward_group({1, 0, 0, 0}), 0.0);
  for (std::size_t i = 0; i < mean.values.size(); ++i) {
    CHECK(pos_hard.values[i] == mean.values[i]);
  }
}

TEST_CASE("masked variants equal mean advantages on the unmasked side") {
  for (const RewardGroup& group : all_binary_groups(8)) {
    if (group.degenerate()) continue;
    for (double k : {0.2, 0.4, 0.7}) {
      const AdvantageVector mean = advantage_mean(group, 0.0);
      const AdvantageVector pos = advantage_masked(group, k, 0.0, MaskSide::PosMask);
      const AdvantageVector neg = advantage_masked(group, k, 0.0, MaskSide::NegMask);
      const bool hard = classify_regime(group, k).regime == Regime::Hard;
      for (std::size_t i = 0; i < mean.values.size(); ++i) {
        const bool positive = group.rewards()[i] == 1.0;
        // Negatives are never masked by PosMask; positives never by NegMask.
        if (!positive) REQUIRE(pos.values[i] == mean.values[i]);
        if (positive) REQUIRE(neg.values[i] == mean.values[i]);
        // The gated side is exactly zero when masked.
        if (positive) REQUIRE(pos.values[i] == (hard ? mean.values[i] : 0.0));
        if (!positive) REQUIRE(neg.values[i] == (hard ? 0.0 : mean.values[i]));
      }
    }
  }
}

TEST_CASE("gate exclusivity with exact zero counts, exhaustively") {
  for (const RewardGroup& group : all_binary_groups(12)) {
    for (double k : kQuantileGrid) {
      const AdvantageVector adv = advantage_quantile(group, k, 1e-6);
      int zeros = 0;
      bool any_pos = false, any_neg = false;
      for (double v : adv.values) {
        if (v == 0.0) ++zeros;
        any_pos = any_pos || v > 0.0;
        any_neg = any_neg || v < 0.0;
      }
      REQUIRE_FALSE((any_pos && any_neg));
      const bool hard = classify_regime(group, k).regime == Regime::Hard;
      const int expected_zeros = hard ? group.failures() : group.successes();
      REQUIRE(zeros == expected_zeros);
    }
  }
}

TEST_CASE("compute_advantage dispatches on the estimator") {
  const RewardGroup group = make_reward_group({1, 0, 0, 0});
  CHECK(compute_advantage(group, Estimator::MeanStd, 0.4, 0.0).estimator ==
        Estimator::MeanStd);
  CHECK(compute_advantage(group, Estimator::QuantileStd, 0.4, 0.0).estimator ==
        Estimator::QuantileStd);
  CHECK(compute_advantage(group, Estimator::PosMask, 0.4, 0.0).estimator ==
        Estimator::PosMask);
  CHECK(compute_advantage(group, Estimator::NegMask, 0.4, 0.0).estimator ==
        Estimator::NegMask);
}
