#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "qae/errors.hpp"
#include "qae/sim.hpp"
#include "qae/version.hpp"

namespace qae {

using json = nlohmann::json;

inline std::string estimator_name(Estimator e) {
  switch (e) {
    case Estimator::MeanStd: return "mean_std";
    case Estimator::QuantileStd: return "quantile_std";
    case Estimator::PosMask: return "pos_mask";
    case Estimator::NegMask: return "neg_mask";
  }
  return "unknown";
}

inline Estimator parse_estimator(const std::string& name) {
  if (name == "mean_std") return Estimator::MeanStd;
  if (name == "quantile_std") return Estimator::QuantileStd;
  if (name == "pos_mask") return Estimator::PosMask;
  if (name == "neg_mask") return Estimator::NegMask;
  throw ConfigError("estimator", "estimator must be one of mean_std, quantile_std, pos_mask, "
                                 "neg_mask; got \"" + name + "\"");
}

inline std::string mode_name(PolicyTable::Mode m) {
  return m == PolicyTable::Mode::FlatBandit ? "flat_bandit" : "autoregressive";
}

inline PolicyTable::Mode parse_mode(const std::string& name) {
  if (name == "flat_bandit") return PolicyTable::Mode::FlatBandit;
  if (name == "autoregressive") return PolicyTable::Mode::Autoregressive;
  throw ConfigError("task.mode",
                    "task.mode must be flat_bandit or autoregressive; got \"" + name + "\"");
}

inline json config_to_json(const TrainConfig& cfg) {
  json task = {
      {"mode", mode_name(cfg.task.mode)},
      {"num_queries", cfg.task.num_queries},
      {"num_responses", cfg.task.num_responses},
      {"vocab_size", cfg.task.vocab_size},
      {"max_length", cfg.task.max_length},
      {"min_success", cfg.task.min_success},
      {"max_success", cfg.task.max_success},
      {"distractor_boost", cfg.task.distractor_boost},
      {"num_distractors", cfg.task.num_distractors},
  };
  return json{
      {"K", cfg.k},
      {"eps_std", cfg.eps_std},
      {"eps_low", cfg.eps_low},
      {"eps_high", cfg.eps_high},
      {"eta", cfg.eta},
      {"group_size", cfg.group_size},
      {"batch_size", cfg.batch_size},
      {"num_steps", cfg.num_steps},
      {"eval_samples", cfg.eval_samples},
      {"seed", cfg.seed},
      {"task_seed", cfg.task_seed ? json(*cfg.task_seed) : json(nullptr)},
      {"estimator", estimator_name(cfg.estimator)},
      {"dynamic_sampling", cfg.dynamic_sampling},
      {"max_resample", cfg.max_resample},
      {"task", task},
  };
}

namespace detail {

template <typename T>
T get_field(const json& j, const std::string& field) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(field, field + " has the wrong type");
  }
}

// Applies the recognized fields of a JSON object onto cfg. Unknown fields
// are rejected so typos fail loudly.
inline void apply_json(TrainConfig& cfg, const json& j, bool& saw_seed) {
  if (!j.is_object()) throw ConfigError("config", "config root must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "K") cfg.k = get_field<double>(value, key);
    else if (key == "eps_std") cfg.eps_std = get_field<double>(value, key);
    else if (key == "eps_low") cfg.eps_low = get_field<double>(value, key);
    else if (key == "eps_high") cfg.eps_high = get_field<double>(value, key);
    else if (key == "eta") cfg.eta = get_field<double>(value, key);
    else if (key == "group_size") cfg.group_size = get_field<int>(value, key);
    else if (key == "batch_size") cfg.batch_size = get_field<int>(value, key);
    else if (key == "num_steps") cfg.num_steps = get_field<int>(value, key);
    else if (key == "eval_samples") cfg.eval_samples = get_field<int>(value, key);
    else if (key == "seed") {
      cfg.seed = get_field<std::uint64_t>(value, key);
      saw_seed = true;
    } else if (key == "task_seed") {
      if (value.is_null()) cfg.task_seed.reset();
      else cfg.task_seed = get_field<std::uint64_t>(value, key);
    } else if (key == "estimator") {
      cfg.estimator = parse_estimator(get_field<std::string>(value, key));
    } else if (key == "dynamic_sampling") {
      cfg.dynamic_sampling = get_field<bool>(value, key);
    } else if (key == "max_resample") {
      cfg.max_resample = get_field<int>(value, key);
    } else if (key == "task") {
      if (!value.is_object()) throw ConfigError("task", "task must be a JSON object");
      for (const auto& [tkey, tvalue] : value.items()) {
        const std::string field = "task." + tkey;
        if (tkey == "mode") cfg.task.mode = parse_mode(get_field<std::string>(tvalue, field));
        else if (tkey == "num_queries") cfg.task.num_queries = get_field<int>(tvalue, field);
        else if (tkey == "num_responses") cfg.task.num_responses = get_field<int>(tvalue, field);
        else if (tkey == "vocab_size") cfg.task.vocab_size = get_field<int>(tvalue, field);
        else if (tkey == "max_length") cfg.task.max_length = get_field<int>(tvalue, field);
        else if (tkey == "min_success") cfg.task.min_success = get_field<double>(tvalue, field);
        else if (tkey == "max_success") cfg.task.max_success = get_field<double>(tvalue, field);
        else if (tkey == "distractor_boost") {
          cfg.task.distractor_boost = get_field<double>(tvalue, field);
        } else if (tkey == "num_distractors") {
          cfg.task.num_distractors = get_field<int>(tvalue, field);
        } else {
          throw ConfigError(field, "unknown config field: " + field);
        }
      }
    } else {
      throw ConfigError(key, "unknown config field: " + key);
    }
  }
}

// QAE_* environment variables, parsed through the same JSON machinery so
// types and errors behave identically. A config file overrides these.
inline json env_overrides() {
  static const std::map<std::string, std::pair<std::string, bool>> kVars = {
      // env suffix -> {json pointer path, is_string}
      {"K", {"/K", false}},
      {"EPS_STD", {"/eps_std", false}},
      {"EPS_LOW", {"/eps_low", false}},
      {"EPS_HIGH", {"/eps_high", false}},
      {"ETA", {"/eta", false}},
      {"GROUP_SIZE", {"/group_size", false}},
      {"BATCH_SIZE", {"/batch_size", false}},
      {"NUM_STEPS", {"/num_steps", false}},
      {"EVAL_SAMPLES", {"/eval_samples", false}},
      {"SEED", {"/seed", false}},
      {"TASK_SEED", {"/task_seed", false}},
      {"ESTIMATOR", {"/estimator", true}},
      {"DYNAMIC_SAMPLING", {"/dynamic_sampling", false}},
      {"MAX_RESAMPLE", {"/max_resample", false}},
      {"TASK_MODE", {"/task/mode", true}},
      {"TASK_NUM_QUERIES", {"/task/num_queries", false}},
      {"TASK_NUM_RESPONSES", {"/task/num_responses", false}},
      {"TASK_VOCAB_SIZE", {"/task/vocab_size", false}},
      {"TASK_MAX_LENGTH", {"/task/max_length", false}},
      {"TASK_MIN_SUCCESS", {"/task/min_success", false}},
      {"TASK_MAX_SUCCESS", {"/task/max_success", false}},
      {"TASK_DISTRACTOR_BOOST", {"/task/distractor_boost", false}},
      {"TASK_NUM_DISTRACTORS", {"/task/num_distractors", false}},
  };
  json out = json::object();
  for (const auto& [suffix, target] : kVars) {
    const char* raw = std::getenv(("QAE_" + suffix).c_str());
    if (raw == nullptr) continue;
    const auto& [pointer, is_string] = target;
    if (is_string) {
      out[json::json_pointer(pointer)] = std::string(raw);
    } else {
      json parsed = json::parse(raw, nullptr, false);
      if (parsed.is_discarded()) {
        throw ConfigError(pointer.substr(1), "QAE_" + suffix + " is not a valid value: " + raw);
      }
      out[json::json_pointer(pointer)] = parsed;
    }
  }
  return out;
}

}  // namespace detail

// Builds a TrainConfig with precedence: defaults < QAE_* environment
// variables < config file < explicit overrides (CLI flags). The seed has no
// default; some layer must provide it.
inline TrainConfig load_config(const std::optional<std::string>& config_path,
                               const std::optional<std::uint64_t>& seed_override,
                               bool use_env = true) {
  TrainConfig cfg;
  bool saw_seed = false;
  if (use_env) detail::apply_json(cfg, detail::env_overrides(), saw_seed);
  if (config_path) {
    std::ifstream in(*config_path);
    if (!in) throw ConfigError("config", "cannot open config file: " + *config_path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config", "config file is not valid JSON");
    detail::apply_json(cfg, j, saw_seed);
  }
  if (seed_override) {
    cfg.seed = *seed_override;
    saw_seed = true;
  }
  if (!saw_seed) {
    throw ConfigError("seed", "seed is required (set it in the config, QAE_SEED, or --seed)");
  }
  validate_config(cfg);
  return cfg;
}

inline TrainConfig parse_config_json(const json& j) {
  TrainConfig cfg;
  bool saw_seed = false;
  detail::apply_json(cfg, j, saw_seed);
  if (!saw_seed) throw ConfigError("seed", "seed is required");
  validate_config(cfg);
  return cfg;
}

// manifest.json: the full effective config plus seed and artifact version.
inline void write_manifest(const std::string& path, const TrainConfig& cfg) {
  json j = {
      {"artifact", std::string("qae-lab ") + kVersion},
      {"seed", cfg.seed},
      {"config", config_to_json(cfg)},
  };
  std::ofstream out(path);
  if (!out) throw SinkError("cannot open manifest sink: " + path);
  out << j.dump(2) << '\n';
}

// Final-policy dump: per-query logits (flat) or visited prefix tables.
inline void write_policy_dump(const std::string& path, const RunState& state) {
  json queries = json::array();
  for (std::size_t q = 0; q < state.queries.size(); ++q) {
    const QueryState& qs = state.queries[q];
    json entry = {{"query", q}, {"mode", mode_name(qs.policy.mode())}};
    if (qs.policy.is_flat()) {
      entry["logits"] = qs.policy.logits();
    } else {
      json tables = json::object();
      for (const auto& [key, row] : qs.policy.visited_tables()) {
        tables[std::to_string(key)] = row;
      }
      entry["prefix_logits"] = tables;
    }
    json correct = json::array();
    for (std::uint64_t c : qs.correct) correct.push_back(c);
    std::sort(correct.begin(), correct.end(),
              [](const json& a, const json& b) {
                return a.get<std::uint64_t>() < b.get<std::uint64_t>();
              });
    entry["correct"] = correct;
    queries.push_back(std::move(entry));
  }
  json j = {{"step", state.step}, {"queries", queries}};
  std::ofstream out(path);
  if (!out) throw SinkError("cannot open policy sink: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace qae
