#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "minclip/common.hpp"

namespace minclip {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic RNG. mt19937_64 gives a platform-stable bit stream; all
// sampling on top of it is hand-rolled because the std distributions are
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  // Named substream derivation: independent streams from one root seed, so
  // toggling a consumer does not perturb the others.
  Rng substream(std::string_view name) const {
    return Rng(splitmix64(seed_ ^ fnv1a(name.data(), name.size())));
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const auto wide = static_cast<unsigned __int128>(next_u64()) * span;
    return lo + static_cast<int>(wide >> 64);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  float uniform_float() { return static_cast<float>(uniform()); }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller, no cached spare (keeps stream consumption predictable).
  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Pick index by unnormalized weights.
  int weighted_index(const std::vector<double>& w) {
    double total = 0.0;
    for (double x : w) total += x;
    double r = uniform() * total;
    for (size_t i = 0; i + 1 < w.size(); ++i) {
      if (r < w[i]) return static_cast<int>(i);
      r -= w[i];
    }
    return static_cast<int>(w.size()) - 1;
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace minclip
