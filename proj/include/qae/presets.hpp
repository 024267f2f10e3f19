#pragma once

#include <limits>

#include "qae/sim.hpp"

namespace qae {
namespace presets {

// Flat-bandit task where entropy regulation is the interesting axis: most
// queries start hard, each policy begins with mass parked on a few wrong
// responses, and the mean baseline keeps hammering those distractors while
// the quantile gate only reinforces sampled successes. Used by the K sweep
// and the entropy-band comparison.
inline TrainConfig exploration_prone() {
  TrainConfig cfg;
  cfg.k = 0.4;
  cfg.eps_std = 1e-6;
  cfg.eps_low = 0.2;
  cfg.eps_high = 0.28;
  cfg.eta = 0.4;
  cfg.group_size = 8;
  cfg.num_steps = 200;
  cfg.estimator = Estimator::QuantileStd;
  cfg.dynamic_sampling = true;
  cfg.max_resample = 64;
  cfg.seed = 1;
  cfg.task_seed = 17;  // one shared task across sweep seeds
  cfg.task.mode = PolicyTable::Mode::FlatBandit;
  cfg.task.num_queries = 40;
  cfg.task.num_responses = 32;
  cfg.task.min_success = 0.05;
  cfg.task.max_success = 0.85;
  cfg.task.distractor_boost = 2.5;
  cfg.task.num_distractors = 2;
  return cfg;
}

// Entropy band the quantile run at K=0.4 settles into on the
// exploration-prone preset (final-quartile mean of entropy_total), while the
// mean-baseline run stays above the upper edge. Tuned once on this preset.
inline constexpr double kEntropyBandLow = 0.4;
inline constexpr double kEntropyBandHigh = 1.14;

// Mean of a metric over the final quarter (rounded up) of a run's history.
inline double final_quartile_mean(const std::vector<MetricsRecord>& history,
                                  double MetricsRecord::* field) {
  if (history.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t quartile = (history.size() + 3) / 4;
  double sum = 0.0;
  for (std::size_t i = history.size() - quartile; i < history.size(); ++i) {
    sum += history[i].*field;
  }
  return sum / static_cast<double>(quartile);
}

}  // namespace presets
}  // namespace qae
