#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "qae/advantage.hpp"
#include "qae/errors.hpp"

namespace qae {

// Per-step scalars written to metrics.csv, in this column order.
struct MetricsRecord {
  int step = 0;
  double entropy_total = 0.0;
  double entropy_pos_adv = 0.0;
  double entropy_neg_adv = 0.0;
  double zero_adv_fraction = 0.0;
  double pass_at_1 = 0.0;
  double pass_at_16 = 0.0;
  double mean_response_length = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "step,entropy_total,entropy_pos_adv,entropy_neg_adv,zero_adv_fraction,"
    "pass_at_1,pass_at_16,mean_response_length";

namespace detail {

// Shortest round-trip decimal representation, stable across runs.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec < 17; ++prec) {
    char probe[40];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
    if (std::strtod(probe, nullptr) == v) return probe;
  }
  return buf;
}

inline unsigned __int128 binomial_u128(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 result = 1;
  for (int i = 1; i <= k; ++i) {
    result = result * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
  }
  return result;
}

}  // namespace detail

// Probability that at least one of k draws (without replacement from n
// samples, c of them correct) is correct: 1 - C(n-c,k)/C(n,k).
// Exact binomial ratio for n <= 64; stable product form beyond.
inline double pass_at_k(int n, int c, int k) {
  if (n < 1 || c < 0 || c > n || k < 1 || k > n) {
    throw InvalidCounts("pass@k needs 0 <= c <= n and 1 <= k <= n, got n=" + std::to_string(n) +
                        " c=" + std::to_string(c) + " k=" + std::to_string(k));
  }
  if (c == 0) return 0.0;
  if (n - c < k) return 1.0;
  if (n <= 64) {
    const unsigned __int128 miss = detail::binomial_u128(n - c, k);
    const unsigned __int128 total = detail::binomial_u128(n, k);
    return 1.0 - static_cast<double>(static_cast<std::uint64_t>(miss)) /
                     static_cast<double>(static_cast<std::uint64_t>(total));
  }
  double miss_ratio = 1.0;
  for (int i = 0; i < k; ++i) {
    miss_ratio *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
  }
  return 1.0 - miss_ratio;
}

// Mean response entropy split by the sign of the advantage. Empty buckets
// report 0 and are flagged so callers can tell "empty" from "zero entropy".
struct SignEntropy {
  double pos = 0.0;
  double neg = 0.0;
  double zero = 0.0;
  bool pos_empty = true;
  bool neg_empty = true;
  bool zero_empty = true;
};

inline SignEntropy entropy_by_sign(std::span<const double> advantages,
                                   std::span<const double> response_entropies) {
  if (advantages.size() != response_entropies.size()) {
    throw std::invalid_argument("advantages/entropies size mismatch");
  }
  double sums[3] = {0.0, 0.0, 0.0};
  int counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < advantages.size(); ++i) {
    const int bucket = advantages[i] > 0.0 ? 0 : (advantages[i] < 0.0 ? 1 : 2);
    sums[bucket] += response_entropies[i];
    counts[bucket] += 1;
  }
  SignEntropy out;
  if (counts[0] > 0) { out.pos = sums[0] / counts[0]; out.pos_empty = false; }
  if (counts[1] > 0) { out.neg = sums[1] / counts[1]; out.neg_empty = false; }
  if (counts[2] > 0) { out.zero = sums[2] / counts[2]; out.zero_empty = false; }
  return out;
}

// Fraction of entries with |value| <= tol; the quantile estimator produces
// exact zeros, so the default tolerance is 0.
inline double zero_fraction(const AdvantageVector& adv, double tol = 0.0) {
  if (adv.values.empty()) throw std::invalid_argument("empty advantage vector");
  int zeros = 0;
  for (double v : adv.values) {
    if (std::abs(v) <= tol) ++zeros;
  }
  return static_cast<double>(zeros) / static_cast<double>(adv.values.size());
}

// Single-writer CSV sink: header exactly once, one flushed row per record,
// and a hard rejection of non-finite values.
class MetricsWriter {
 public:
  explicit MetricsWriter(std::ostream& out) : out_(&out) {}

  explicit MetricsWriter(const std::string& path) {
    file_.open(path, std::ios::out | std::ios::trunc);
    if (!file_) throw SinkError("cannot open metrics sink: " + path);
    out_ = &file_;
  }

  void append(const MetricsRecord& rec) {
    const double fields[] = {rec.entropy_total,     rec.entropy_pos_adv, rec.entropy_neg_adv,
                             rec.zero_adv_fraction, rec.pass_at_1,       rec.pass_at_16,
                             rec.mean_response_length};
    for (double f : fields) {
      if (!std::isfinite(f)) throw SinkError("metrics must be finite");
    }
    if (!wrote_header_) {
      (*out_) << kMetricsHeader << '\n';
      wrote_header_ = true;
    }
    (*out_) << rec.step;
    for (double f : fields) (*out_) << ',' << detail::format_double(f);
    (*out_) << '\n';
    out_->flush();
    if (!*out_) throw SinkError("metrics sink write failed");
  }

 private:
  std::ofstream file_;
  std::ostream* out_ = nullptr;
  bool wrote_header_ = false;
};

}  // namespace qae
