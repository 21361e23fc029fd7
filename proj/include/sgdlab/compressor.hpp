#pragma once

#include <cstddef>
#include <string>

#include "sgdlab/problem.hpp"
#include "sgdlab/random.hpp"

namespace sgdlab {

enum class CompressorKind { Identity, RandK, BernoulliScale };

/// Unbiased compression operator Q with E[Q(x)] = x and E|Q(x) - x|^2 <= omega |x|^2.
class CompressorSpec {
 public:
  static CompressorSpec identity();
  /// Keeps k of d coordinates chosen uniformly, scaled by d/k. Requires 1 <= k <= d.
  static CompressorSpec rand_k(std::size_t k, std::size_t d);
  /// Keeps each coordinate independently with probability q, scaled by 1/q. Requires q in (0, 1].
  static CompressorSpec bernoulli(double q);

  CompressorKind kind() const { return kind_; }
  std::size_t k() const { return k_; }
  /// Dimension the compressor was configured for (RandK only; 0 otherwise).
  std::size_t d() const { return d_; }
  double q() const { return q_; }
  double omega() const { return omega_; }

  std::string describe() const;

 private:
  CompressorSpec(CompressorKind kind, std::size_t k, std::size_t d, double q, double omega)
      : kind_(kind), k_(k), d_(d), q_(q), omega_(omega) {}

  CompressorKind kind_;
  std::size_t k_;
  std::size_t d_;
  double q_;
  double omega_;
};

Vector compress(const CompressorSpec& spec, const Vector& x, RandomStream& rng);

struct CompressorMoments {
  Vector mean;
  /// E|Q(x) - x|^2.
  double mse = 0.0;
};

/// Largest outcome space exact_moments will enumerate.
inline constexpr std::size_t kMaxRandKSubsets = 10'000;
inline constexpr std::size_t kMaxBernoulliDim = 16;

/// True when exact_moments supports (spec, d).
bool enumerable(const CompressorSpec& spec, std::size_t d);

/// Exact mean and mean squared error by enumerating every outcome with its
/// probability. Throws UnsupportedSizeError past the enumeration limits.
CompressorMoments exact_moments(const CompressorSpec& spec, const Vector& x);

}  // namespace sgdlab
