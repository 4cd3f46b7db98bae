#pragma once

// Test-only reference implementations. These stay deliberately independent of
// the library's computation paths: plain loops, brute-force sorts, textbook
// formulas.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "minclip/rng.hpp"

namespace oracles {

// Brute-force top-k over dot products: full sort by (-score, id).
inline std::vector<std::int64_t> brute_force_top_k(const std::vector<std::vector<float>>& rows,
                                                   const std::vector<std::int64_t>& ids,
                                                   const std::vector<float>& query, int k) {
  std::vector<std::pair<double, std::int64_t>> scored;
  for (size_t i = 0; i < rows.size(); ++i) {
    double dot = 0.0;
    for (size_t j = 0; j < query.size(); ++j) dot += static_cast<double>(rows[i][j]) * query[j];
    scored.emplace_back(dot, ids[i]);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::int64_t> out;
  for (int i = 0; i < k; ++i) out.push_back(scored[static_cast<size_t>(i)].second);
  return out;
}

// Textbook pooled two-proportion z in long double, arranged differently from
// the library (explicit variance accumulation).
inline long double pooled_z(std::int64_t s1, std::int64_t n1, std::int64_t s2, std::int64_t n2) {
  const long double p1 = static_cast<long double>(s1) / n1;
  const long double p2 = static_cast<long double>(s2) / n2;
  const long double pooled = (static_cast<long double>(s1) + s2) / (static_cast<long double>(n1) + n2);
  const long double var = pooled * (1.0L - pooled) / n1 + pooled * (1.0L - pooled) / n2;
  return (p1 - p2) / std::sqrt(var);
}

// Mean and variance by direct accumulation (layernorm oracle).
inline std::pair<double, double> mean_var(const std::vector<float>& v) {
  double mean = 0.0;
  for (float x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (float x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  return {mean, var};
}

inline std::vector<double> random_unit_vector(minclip::Rng& rng, int dim) {
  std::vector<double> v(static_cast<size_t>(dim));
  double norm2 = 0.0;
  for (auto& x : v) {
    x = rng.gaussian();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : v) x *= inv;
  return v;
}

}  // namespace oracles
