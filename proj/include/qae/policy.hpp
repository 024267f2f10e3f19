#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "qae/errors.hpp"
#include "qae/rng.hpp"

namespace qae {

inline void softmax_into(std::span<const double> logits, std::vector<double>& probs) {
  double m = logits[0];
  for (double z : logits) m = std::max(m, z);
  probs.resize(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - m);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> probs;
  softmax_into(logits, probs);
  return probs;
}

// Shannon entropy of a softmax distribution, computed from the logits so
// that log-probabilities stay accurate for very sharp distributions.
inline double softmax_entropy(std::span<const double> logits) {
  double m = logits[0];
  for (double z : logits) m = std::max(m, z);
  double total = 0.0;
  for (double z : logits) total += std::exp(z - m);
  const double log_total = std::log(total);
  double h = 0.0;
  for (double z : logits) {
    const double logp = (z - m) - log_total;
    h -= std::exp(logp) * logp;
  }
  return h;
}

// A sampled response: a single action for flat bandits, a token sequence
// for autoregressive policies.
struct Response {
  std::vector<int> tokens;

  int length() const { return static_cast<int>(tokens.size()); }
};

// Softmax policy for one query. Two layouts:
//   FlatBandit     — one logit vector over N whole responses.
//   Autoregressive — a logit vector over V tokens per prefix, materialized
//                    lazily (absent prefixes are uniform, logits all zero).
// Prefixes are packed into a uint64 key, which caps V at 16 and L at 8.
class PolicyTable {
 public:
  enum class Mode { FlatBandit, Autoregressive };

  static constexpr int kMaxVocab = 16;
  static constexpr int kMaxLength = 8;

  static PolicyTable flat_bandit(std::vector<double> logits) {
    if (logits.size() < 2) throw std::invalid_argument("flat bandit needs at least 2 responses");
    PolicyTable t;
    t.mode_ = Mode::FlatBandit;
    t.flat_logits_ = std::move(logits);
    t.check_finite(t.flat_logits_);
    return t;
  }

  static PolicyTable autoregressive(int vocab_size, int max_length) {
    if (vocab_size < 2 || vocab_size > kMaxVocab) {
      throw std::invalid_argument("vocab_size must be in [2," + std::to_string(kMaxVocab) +
                                  "], got " + std::to_string(vocab_size));
    }
    if (max_length < 1 || max_length > kMaxLength) {
      throw std::invalid_argument("max_length must be in [1," + std::to_string(kMaxLength) +
                                  "], got " + std::to_string(max_length));
    }
    PolicyTable t;
    t.mode_ = Mode::Autoregressive;
    t.vocab_size_ = vocab_size;
    t.max_length_ = max_length;
    t.zero_row_.assign(static_cast<std::size_t>(vocab_size), 0.0);
    return t;
  }

  Mode mode() const { return mode_; }
  bool is_flat() const { return mode_ == Mode::FlatBandit; }
  int vocab_size() const { return vocab_size_; }
  int max_length() const { return max_length_; }

  int num_actions() const {
    return is_flat() ? static_cast<int>(flat_logits_.size()) : vocab_size_;
  }

  const std::vector<double>& logits() const { return flat_logits_; }
  std::vector<double>& mutable_logits() { return flat_logits_; }

  std::vector<double> probs() const { return softmax(flat_logits_); }

  // --- prefix encoding (autoregressive) ---------------------------------
  // Base-(V+1) packing; 0 encodes the empty prefix.
  static std::uint64_t empty_prefix() { return 0; }

  std::uint64_t extend_prefix(std::uint64_t key, int token) const {
    return key * static_cast<std::uint64_t>(vocab_size_ + 1) +
           static_cast<std::uint64_t>(token + 1);
  }

  std::uint64_t encode(const Response& response) const {
    if (!is_flat()) {
      std::uint64_t key = empty_prefix();
      for (int tok : response.tokens) key = extend_prefix(key, tok);
      return key;
    }
    return static_cast<std::uint64_t>(response.tokens.at(0));
  }

  // Logits for a prefix; unvisited prefixes read as all-zero (uniform).
  const std::vector<double>& prefix_logits(std::uint64_t key) const {
    auto it = tables_.find(key);
    return it != tables_.end() ? it->second : zero_row_;
  }

  std::vector<double>& mutable_prefix_logits(std::uint64_t key) {
    auto [it, inserted] = tables_.try_emplace(key);
    if (inserted) it->second.assign(static_cast<std::size_t>(vocab_size_), 0.0);
    return it->second;
  }

  const std::unordered_map<std::uint64_t, std::vector<double>>& visited_tables() const {
    return tables_;
  }

  // --- sampling ----------------------------------------------------------

  Response sample(Rng& rng) const {
    if (is_flat()) {
      return Response{{rng.categorical(probs())}};
    }
    Response r;
    std::uint64_t key = empty_prefix();
    std::vector<double> probs;
    for (int t = 0; t < max_length_; ++t) {
      softmax_into(prefix_logits(key), probs);
      const int tok = rng.categorical(probs);
      r.tokens.push_back(tok);
      key = extend_prefix(key, tok);
    }
    return r;
  }

  double response_probability(const Response& response) const {
    if (is_flat()) {
      return probs()[static_cast<std::size_t>(response.tokens.at(0))];
    }
    double p = 1.0;
    std::uint64_t key = empty_prefix();
    std::vector<double> probs;
    for (int tok : response.tokens) {
      softmax_into(prefix_logits(key), probs);
      p *= probs[static_cast<std::size_t>(tok)];
      key = extend_prefix(key, tok);
    }
    return p;
  }

  // Mean token-distribution entropy along a response's prefixes. For flat
  // bandits every response sees the same single distribution.
  double response_token_entropy(const Response& response) const {
    if (is_flat()) return softmax_entropy(flat_logits_);
    double h = 0.0;
    std::uint64_t key = empty_prefix();
    for (int tok : response.tokens) {
      h += softmax_entropy(prefix_logits(key));
      key = extend_prefix(key, tok);
    }
    return h / static_cast<double>(response.tokens.size());
  }

 private:
  void check_finite(const std::vector<double>& zs) const {
    for (double z : zs) {
      if (!std::isfinite(z)) throw std::invalid_argument("logits must be finite");
    }
  }

  Mode mode_ = Mode::FlatBandit;
  std::vector<double> flat_logits_;
  int vocab_size_ = 0;
  int max_length_ = 0;
  std::unordered_map<std::uint64_t, std::vector<double>> tables_;
  std::vector<double> zero_row_;
};

}  // namespace qae
