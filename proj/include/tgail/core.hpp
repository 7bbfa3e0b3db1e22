#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace tgail {

using Scalar = double;
using Index = Eigen::Index;

using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;

/// Thrown when array shapes disagree with what an operation expects.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a NaN or infinity shows up where a finite value is required.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// splitmix64 finalizer; used to derive independent sub-seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base) { return mix64(base); }

template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t next, Rest... rest) {
  return derive_seed(mix64(base ^ mix64(next)), static_cast<std::uint64_t>(rest)...);
}

/// Deterministic random source. Distributions are computed from raw engine
/// bits so streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  Scalar uniform() { return static_cast<Scalar>(engine_() >> 11) * 0x1.0p-53; }

  Scalar uniform(Scalar lo, Scalar hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  Scalar normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    Scalar u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const Scalar u2 = uniform();
    const Scalar r = std::sqrt(-2.0 * std::log(u1));
    const Scalar theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  Vec normal_vec(Index n) {
    Vec v(n);
    for (Index i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

  /// Index drawn from a discrete distribution given by non-negative weights.
  Index categorical(const Eigen::Ref<const Vec>& probs) {
    const Scalar total = probs.sum();
    Scalar u = uniform() * total;
    for (Index i = 0; i < probs.size(); ++i) {
      u -= probs(i);
      if (u < 0.0) return i;
    }
    for (Index i = probs.size() - 1; i >= 0; --i)
      if (probs(i) > 0.0) return i;
    return probs.size() - 1;
  }

 private:
  std::mt19937_64 engine_;
  Scalar spare_ = 0.0;
  bool has_spare_ = false;
};

inline bool all_finite(const Eigen::Ref<const Mat>& m) { return m.allFinite(); }

/// Index of the largest entry; ties resolve to the lowest index.
inline Index argmax_lowest(const Eigen::Ref<const Vec>& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

inline Vec one_hot(Index k, Index n) {
  Vec v = Vec::Zero(n);
  v(k) = 1.0;
  return v;
}

/// 64-bit FNV-1a over raw bytes.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t h);

}  // namespace tgail
