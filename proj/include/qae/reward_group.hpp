#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "qae/errors.hpp"

namespace qae {

// One query's sampled rewards: G binary outcomes plus the group statistics
// everything downstream keys off (success rate, population std, empirical CDF).
// Immutable after construction; safe to share across threads.
class RewardGroup {
 public:
  // Validates and adopts the rewards. Each entry must be exactly 0.0 or 1.0
  // and at least two entries are required.
  explicit RewardGroup(std::vector<double> rewards) : rewards_(std::move(rewards)) {
    if (rewards_.size() < 2) {
      throw GroupTooSmall("reward group needs at least 2 responses, got " +
                          std::to_string(rewards_.size()));
    }
    for (double r : rewards_) {
      if (r != 0.0 && r != 1.0) {
        throw NonBinaryReward("reward " + std::to_string(r) + " is not 0 or 1");
      }
      if (r == 1.0) ++successes_;
    }
    success_rate_ = static_cast<double>(successes_) / static_cast<double>(size());
    // Population std computed from the data, not from the p(1-p) shortcut;
    // the two agree for binary rewards and the tests pin that down.
    double ss = 0.0;
    for (double r : rewards_) ss += (r - success_rate_) * (r - success_rate_);
    std_dev_ = std::sqrt(ss / static_cast<double>(size()));
  }

  const std::vector<double>& rewards() const { return rewards_; }
  int size() const { return static_cast<int>(rewards_.size()); }
  int successes() const { return successes_; }
  int failures() const { return size() - successes_; }

  // p(q): fraction of rewards equal to 1.
  double success_rate() const { return success_rate_; }

  // Population standard deviation of the rewards.
  double std_dev() const { return std_dev_; }

  bool degenerate() const { return successes_ == 0 || successes_ == size(); }

  // Right-continuous empirical CDF: fraction of rewards <= x.
  double cdf(double x) const {
    int count = 0;
    for (double r : rewards_) {
      if (r <= x) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(size());
  }

 private:
  std::vector<double> rewards_;
  int successes_ = 0;
  double success_rate_ = 0.0;
  double std_dev_ = 0.0;
};

inline RewardGroup make_reward_group(std::span<const double> rewards) {
  return RewardGroup(std::vector<double>(rewards.begin(), rewards.end()));
}

inline RewardGroup make_reward_group(std::initializer_list<double> rewards) {
  return RewardGroup(std::vector<double>(rewards));
}

// Builds the group {1,...,1,0,...,0} with `successes` ones.
inline RewardGroup make_counted_group(int group_size, int successes) {
  std::vector<double> r(static_cast<std::size_t>(group_size), 0.0);
  for (int i = 0; i < successes; ++i) r[static_cast<std::size_t>(i)] = 1.0;
  return RewardGroup(std::move(r));
}

inline double empirical_cdf(const RewardGroup& group, double x) { return group.cdf(x); }

}  // namespace qae
