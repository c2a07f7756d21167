// Seeded RNG with explicit deterministic transforms. The mt19937_64 raw
// stream is fully specified by the standard; the distribution transforms in
// <random> are not, so we implement them here to keep identical seeds giving
// bit-identical draws regardless of the standard library build.
#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <vector>

namespace sa {

struct RngSeed {
  uint64_t seed = 0;
};

class Rng {
 public:
  explicit Rng(RngSeed s) : engine_(s.seed) {}
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // uniform in [0, 1) with 53 bits of precision
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller, second draw cached
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // uniform integer in [0, n), rejection sampled to avoid modulo bias
  uint64_t below(uint64_t n) {
    if (n == 0) return 0;
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  // Fisher-Yates
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // derive an independent stream, e.g. one per cross-validation fold
  Rng fork(uint64_t stream) {
    return Rng(engine_() ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
  }

  uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sa
