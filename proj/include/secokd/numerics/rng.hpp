#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace secokd::numerics {

// FNV-1a over the base seed bytes and a tag; used to derive independent
// deterministic streams for the pipeline stages.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

// Deterministic RNG wrapper. Distributions are hand-rolled so draws depend
// only on the mt19937_64 bit stream, not on the standard library version.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; two uniforms per draw, no cached spare.
  double gaussian() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    const double r = std::sqrt(-2.0 * std::log(u));
    const double theta = 6.283185307179586 * uniform();
    return r * std::cos(theta);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  // Unbiased draw in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n);

  // Inclusive integer range.
  int range(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1))); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  Rng fork(std::string_view tag) const { return Rng(derive_seed(seed_, tag)); }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace secokd::numerics
