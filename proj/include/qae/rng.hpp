#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace qae {

// splitmix64: used to derive independent stream seeds from a master seed.
// Output sequence is fixed by the algorithm, not by the platform.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Combines a master seed with stream labels (step, query, purpose, ...)
// into one stream seed. Same inputs give the same stream on every platform
// and regardless of evaluation order, which is what makes runs replayable.
inline std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> labels) {
  std::uint64_t s = splitmix64(seed);
  for (std::uint64_t v : labels) s = splitmix64(s ^ (v + 0x9e3779b97f4a7c15ull));
  return s;
}

// Deterministic random stream. mt19937_64 is fully specified by the
// standard; the derived draws below avoid std::*_distribution, whose
// output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection keeps the draw unbiased.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Samples an index from an unnormalized weight vector by CDF inversion.
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    double cum = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      cum += weights[i];
      if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
  }

  // First k elements of a random permutation of [0, n).
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < k; ++i) {
      const int j = i + static_cast<int>(uniform_int(static_cast<std::uint64_t>(n - i)));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace qae
