#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace minclip {

// Shape/dimension errors raised by tensor ops.
struct ShapeMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// An op produced a non-finite value.
struct NumericOverflow : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonScalarRoot : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

// FNV-1a over bytes; used for config echoes and artifact content ids.
inline std::uint64_t fnv1a(const void* data, size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

}  // namespace minclip
