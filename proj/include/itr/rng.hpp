#pragma once

#include <cstdint>
#include <cmath>
#include <string>
#include <string_view>

namespace itr {

// Counter-based splitmix64 stream. Used everywhere randomness is needed so
// that results are reproducible across platforms and standard-library
// versions (std::normal_distribution is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    // Rejection sampling to avoid modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller; second draw cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Deterministic seed derivation for sub-streams (per-tree, per-fold,
// per-replicate) from a master seed and a sequence of labels.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  Rng r(master ^ (0x5851f42d4c957f2dULL * (stream + 1)));
  return r.next_u64();
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
  // FNV-1a over the label, mixed with the master seed.
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : label) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 1099511628211ULL;
  }
  return derive_seed(master, h);
}

template <typename... Rest>
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, Rest... rest) {
  return derive_seed(derive_seed(master, stream), rest...);
}

template <typename... Rest>
std::uint64_t derive_seed(std::uint64_t master, std::string_view label, Rest... rest) {
  return derive_seed(derive_seed(master, label), rest...);
}

}  // namespace itr
