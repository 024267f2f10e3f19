#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "qae/advantage.hpp"
#include "qae/entropy.hpp"
#include "qae/errors.hpp"
#include "qae/metrics.hpp"
#include "qae/policy.hpp"
#include "qae/rng.hpp"
#include "qae/surrogate.hpp"

namespace qae {

// Synthetic verifiable-reward task: each query has a fixed set of correct
// responses, and the per-query share of correct responses is drawn so that
// initial success rates span the configured difficulty range. Optionally a
// few incorrect responses start with boosted logits ("distractors"), which
// gives the initial policies a wrong mode to escape from.
struct SyntheticTaskSpec {
  PolicyTable::Mode mode = PolicyTable::Mode::FlatBandit;
  int num_queries = 16;
  int num_responses = 32;  // flat-bandit action count
  int vocab_size = 4;      // autoregressive
  int max_length = 3;      // autoregressive
  double min_success = 0.05;
  double max_success = 0.9;
  double distractor_boost = 0.0;
  int num_distractors = 1;
};

// Every tunable of a run.
struct TrainConfig {
  double k = 0.4;
  double eps_std = 1e-6;
  double eps_low = 0.2;
  double eps_high = 0.28;
  double eta = 0.5;
  int group_size = 8;
  int batch_size = 0;  // 0 = every query, every step
  int num_steps = 100;
  int eval_samples = 32;
  std::uint64_t seed = 0;
  // Task materialization seed; fixes the dataset across training seeds.
  // Unset = derive the task from `seed` as well.
  std::optional<std::uint64_t> task_seed;
  Estimator estimator = Estimator::QuantileStd;
  bool dynamic_sampling = true;
  int max_resample = 64;
  SyntheticTaskSpec task;
};

inline void validate_config(const TrainConfig& cfg) {
  if (!(cfg.k > 0.0 && cfg.k < 1.0)) {
    throw ConfigError("K", "K must lie strictly inside (0,1)");
  }
  if (cfg.eps_std < 0.0) throw ConfigError("eps_std", "eps_std must be >= 0");
  if (!(cfg.eps_low > 0.0) || cfg.eps_low > 1.0) {
    throw ConfigError("eps_low", "eps_low must lie in (0,1]");
  }
  if (!(cfg.eps_high > 0.0)) throw ConfigError("eps_high", "eps_high must be > 0");
  if (!(cfg.eta > 0.0)) throw ConfigError("eta", "eta must be > 0");
  if (cfg.group_size < 2) throw ConfigError("group_size", "group_size must be >= 2");
  if (cfg.batch_size < 0) throw ConfigError("batch_size", "batch_size must be >= 0");
  if (cfg.num_steps < 0) throw ConfigError("num_steps", "num_steps must be >= 0");
  if (cfg.eval_samples < 16) throw ConfigError("eval_samples", "eval_samples must be >= 16");
  if (cfg.max_resample < 1) throw ConfigError("max_resample", "max_resample must be >= 1");
  if (cfg.task.num_queries < 1) throw ConfigError("task.num_queries", "need at least one query");
  if (cfg.task.mode == PolicyTable::Mode::FlatBandit) {
    if (cfg.task.num_responses < 2) {
      throw ConfigError("task.num_responses", "need at least two responses per query");
    }
  } else {
    if (cfg.task.vocab_size < 2 || cfg.task.vocab_size > PolicyTable::kMaxVocab) {
      throw ConfigError("task.vocab_size", "vocab_size must lie in [2,16]");
    }
    if (cfg.task.max_length < 1 || cfg.task.max_length > PolicyTable::kMaxLength) {
      throw ConfigError("task.max_length", "max_length must lie in [1,8]");
    }
  }
  if (!(cfg.task.min_success > 0.0 && cfg.task.max_success < 1.0 &&
        cfg.task.min_success <= cfg.task.max_success)) {
    throw ConfigError("task.min_success",
                      "difficulty range must satisfy 0 < min_success <= max_success < 1");
  }
  if (cfg.task.num_distractors < 0) {
    throw ConfigError("task.num_distractors", "num_distractors must be >= 0");
  }
}

// One query's mutable training state.
struct QueryState {
  PolicyTable policy;
  std::unordered_set<std::uint64_t> correct;  // encoded correct responses

  bool is_correct(const Response& r) const { return correct.count(policy.encode(r)) > 0; }
};

// Stream labels for per-(step, query) random streams.
enum class StreamPurpose : std::uint64_t {
  Task = 0,
  Rollout = 1,
  EvalEntropy = 2,
  Batch = 3,
  EvalPass = 4,
};

struct RunState {
  TrainConfig config;
  std::vector<QueryState> queries;
  int step = 0;
  std::vector<MetricsRecord> history;

  Rng stream(StreamPurpose purpose, int query = 0) const {
    return Rng(mix_seed(config.seed, {static_cast<std::uint64_t>(purpose),
                                      static_cast<std::uint64_t>(step),
                                      static_cast<std::uint64_t>(query)}));
  }
};

namespace detail {

inline std::uint64_t num_response_strings(const SyntheticTaskSpec& task) {
  if (task.mode == PolicyTable::Mode::FlatBandit) {
    return static_cast<std::uint64_t>(task.num_responses);
  }
  std::uint64_t n = 1;
  for (int t = 0; t < task.max_length; ++t) n *= static_cast<std::uint64_t>(task.vocab_size);
  return n;
}

inline Response decode_response(const SyntheticTaskSpec& task, std::uint64_t index) {
  if (task.mode == PolicyTable::Mode::FlatBandit) {
    return Response{{static_cast<int>(index)}};
  }
  Response r;
  r.tokens.resize(static_cast<std::size_t>(task.max_length));
  for (int t = task.max_length - 1; t >= 0; --t) {
    r.tokens[static_cast<std::size_t>(t)] =
        static_cast<int>(index % static_cast<std::uint64_t>(task.vocab_size));
    index /= static_cast<std::uint64_t>(task.vocab_size);
  }
  return r;
}

}  // namespace detail

// Materializes the task and the initial per-query policies from the seed.
inline RunState init_run(const TrainConfig& cfg) {
  validate_config(cfg);
  RunState state;
  state.config = cfg;
  const SyntheticTaskSpec& task = cfg.task;
  const std::uint64_t space = detail::num_response_strings(task);
  if (space < 2) throw ConfigError("task", "response space must have at least 2 elements");

  const std::uint64_t task_seed = cfg.task_seed.value_or(cfg.seed);
  for (int q = 0; q < task.num_queries; ++q) {
    Rng rng(mix_seed(task_seed, {static_cast<std::uint64_t>(StreamPurpose::Task),
                                 static_cast<std::uint64_t>(q)}));
    // Target share of correct responses; always leaves at least one correct
    // and at least one incorrect response.
    const double target = rng.uniform(task.min_success, task.max_success);
    std::uint64_t num_correct = static_cast<std::uint64_t>(
        std::llround(target * static_cast<double>(space)));
    num_correct = std::max<std::uint64_t>(1, std::min(space - 1, num_correct));

    QueryState qs{task.mode == PolicyTable::Mode::FlatBandit
                      ? PolicyTable::flat_bandit(
                            std::vector<double>(static_cast<std::size_t>(task.num_responses), 0.0))
                      : PolicyTable::autoregressive(task.vocab_size, task.max_length),
                  {}};

    // Sample the correct set without replacement from the response space.
    while (qs.correct.size() < num_correct) {
      const std::uint64_t idx = rng.uniform_int(space);
      qs.correct.insert(qs.policy.encode(detail::decode_response(task, idx)));
    }

    // Boost a few incorrect responses so training starts from a wrong mode.
    if (task.distractor_boost != 0.0 && task.mode == PolicyTable::Mode::FlatBandit) {
      int placed = 0;
      while (placed < task.num_distractors) {
        const std::uint64_t idx = rng.uniform_int(space);
        if (qs.correct.count(idx) > 0) continue;
        qs.policy.mutable_logits()[static_cast<std::size_t>(idx)] += task.distractor_boost;
        ++placed;
      }
    }
    state.queries.push_back(std::move(qs));
  }
  return state;
}

struct RolloutResult {
  std::vector<Response> responses;
  RewardGroup rewards;
  GroupRollout rollout;  // on-policy: every ratio is 1
};

// Samples G responses i.i.d. from the query's current policy and scores
// them against the correct set. Ratios start at 1: the sampling policy is
// the update-time snapshot.
inline RolloutResult rollout_group(const RunState& state, int query, int group_size, Rng& rng) {
  const QueryState& qs = state.queries.at(static_cast<std::size_t>(query));
  std::vector<Response> responses;
  std::vector<double> rewards;
  GroupRollout rollout;
  responses.reserve(static_cast<std::size_t>(group_size));
  for (int i = 0; i < group_size; ++i) {
    Response r = qs.policy.sample(rng);
    rewards.push_back(qs.is_correct(r) ? 1.0 : 0.0);
    rollout.ratios.emplace_back(static_cast<std::size_t>(r.length()), 1.0);
    responses.push_back(std::move(r));
  }
  return RolloutResult{std::move(responses), RewardGroup(std::move(rewards)),
                       std::move(rollout)};
}

// Redraws until the group mixes successes and failures; Skip (nullopt)
// after max_resample all-pass/all-fail draws.
inline std::optional<RolloutResult> dynamic_sample(const RunState& state, int query,
                                                   int group_size, int max_resample, Rng& rng) {
  for (int attempt = 0; attempt < max_resample; ++attempt) {
    RolloutResult result = rollout_group(state, query, group_size, rng);
    if (!result.rewards.degenerate()) return result;
  }
  return std::nullopt;
}

// One optimization step over the batch: rollout, advantage, clipped-surrogate
// gradient, logit update, then metrics. Throws EmptyBatch if every query in
// the batch was skipped by dynamic sampling.
inline MetricsRecord train_step(RunState& state) {
  const TrainConfig& cfg = state.config;
  std::vector<int> batch;
  const int nq = static_cast<int>(state.queries.size());
  if (cfg.batch_size == 0 || cfg.batch_size >= nq) {
    batch.resize(static_cast<std::size_t>(nq));
    for (int q = 0; q < nq; ++q) batch[static_cast<std::size_t>(q)] = q;
  } else {
    Rng rng = state.stream(StreamPurpose::Batch);
    batch = rng.sample_without_replacement(nq, cfg.batch_size);
    std::sort(batch.begin(), batch.end());
  }

  int accepted = 0;
  int zero_entries = 0;
  int total_responses = 0;
  long total_tokens = 0;
  std::vector<double> batch_advantages;
  std::vector<double> batch_entropies;  // response token entropy under the rollout policy

  const ClipSpec clip(cfg.eps_low, cfg.eps_high);
  for (int query : batch) {
    Rng rng = state.stream(StreamPurpose::Rollout, query);
    std::optional<RolloutResult> rolled;
    if (cfg.dynamic_sampling) {
      rolled = dynamic_sample(state, query, cfg.group_size, cfg.max_resample, rng);
    } else {
      rolled = rollout_group(state, query, cfg.group_size, rng);
    }
    if (!rolled) continue;  // query skipped this step
    ++accepted;

    const AdvantageVector adv =
        compute_advantage(rolled->rewards, cfg.estimator, cfg.k, cfg.eps_std);

    QueryState& qs = state.queries[static_cast<std::size_t>(query)];
    for (std::size_t i = 0; i < adv.values.size(); ++i) {
      batch_advantages.push_back(adv.values[i]);
      batch_entropies.push_back(qs.policy.response_token_entropy(rolled->responses[i]));
      if (adv.values[i] == 0.0) ++zero_entries;
      total_tokens += rolled->responses[i].length();
    }
    total_responses += static_cast<int>(adv.values.size());

    const PolicyGradient grad =
        surrogate_gradient(qs.policy, qs.policy, rolled->responses, adv, clip);
    qs.policy = apply_gradient_step(qs.policy, grad, cfg.eta);
  }
  if (accepted == 0) {
    throw EmptyBatch("every query in the batch was skipped at step " +
                     std::to_string(state.step));
  }

  MetricsRecord rec;
  rec.step = state.step;
  rec.zero_adv_fraction =
      static_cast<double>(zero_entries) / static_cast<double>(total_responses);
  rec.mean_response_length =
      static_cast<double>(total_tokens) / static_cast<double>(total_responses);

  const SignEntropy sign = entropy_by_sign(batch_advantages, batch_entropies);
  rec.entropy_pos_adv = sign.pos;
  rec.entropy_neg_adv = sign.neg;

  // Post-update diagnostics over every query (not just this step's batch).
  double entropy_sum = 0.0;
  double p1 = 0.0, p16 = 0.0;
  for (int q = 0; q < nq; ++q) {
    QueryState& qs = state.queries[static_cast<std::size_t>(q)];
    Rng ent_rng = state.stream(StreamPurpose::EvalEntropy, q);
    entropy_sum += policy_entropy(qs.policy, ent_rng);
    Rng eval_rng = state.stream(StreamPurpose::EvalPass, q);
    int correct = 0;
    for (int s = 0; s < cfg.eval_samples; ++s) {
      if (qs.is_correct(qs.policy.sample(eval_rng))) ++correct;
    }
    p1 += pass_at_k(cfg.eval_samples, correct, 1);
    p16 += pass_at_k(cfg.eval_samples, correct, std::min(16, cfg.eval_samples));
  }
  rec.entropy_total = entropy_sum / static_cast<double>(nq);
  rec.pass_at_1 = p1 / static_cast<double>(nq);
  rec.pass_at_16 = p16 / static_cast<double>(nq);

  state.step += 1;
  state.history.push_back(rec);
  return rec;
}

struct RunResult {
  RunState state;
  std::vector<MetricsRecord> history;
};

// Executes num_steps optimization steps. Fully determined by (config, seed);
// metrics are persisted through the sink as they are produced.
inline RunResult run_experiment(const TrainConfig& cfg, MetricsWriter* sink = nullptr) {
  RunState state = init_run(cfg);
  for (int s = 0; s < cfg.num_steps; ++s) {
    const MetricsRecord rec = train_step(state);
    if (sink != nullptr) sink->append(rec);
  }
  std::vector<MetricsRecord> history = state.history;
  return RunResult{std::move(state), std::move(history)};
}

}  // namespace qae
