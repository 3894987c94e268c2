#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace trajctl {

// Deterministic random stream. std::mt19937_64 output is fully specified by
// the standard; the uniform/normal transforms below are hand-rolled because
// std::*_distribution is implementation-defined and would break cross-platform
// reproducibility of seeded weights and reports.
class DetRng {
 public:
  explicit DetRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). The modulo bias is irrelevant at the n
  // values used here (frame counts) and keeps the mapping trivially portable.
  std::uint64_t uniform_below(std::uint64_t n) { return engine_() % n; }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// FNV-1a, used for token hashing and feature checksums.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t seed = 14695981039346656037ull) {
  std::uint64_t hash = seed;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

inline std::uint64_t fnv1a64(const void* data, std::size_t size,
                             std::uint64_t seed = 14695981039346656037ull) {
  return fnv1a64(
      std::string_view(static_cast<const char*>(data), size), seed);
}

}  // namespace trajctl
