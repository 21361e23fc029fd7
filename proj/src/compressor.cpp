#include "sgdlab/compressor.hpp"

#include <cmath>
#include <numeric>
#include <vector>

#include "sgdlab/errors.hpp"

namespace sgdlab {
namespace {

// C(d, k), saturating at max + 1 so callers can compare against a limit.
std::size_t binomial_capped(std::size_t d, std::size_t k, std::size_t max) {
  if (k > d) return 0;
  k = std::min(k, d - k);
  double value = 1.0;
  for (std::size_t j = 1; j <= k; ++j) {
    value = value * static_cast<double>(d - k + j) / static_cast<double>(j);
    if (value > static_cast<double>(max)) return max + 1;
  }
  return static_cast<std::size_t>(std::llround(value));
}

void check_dimension(const CompressorSpec& spec, const Vector& x) {
  if (spec.kind() == CompressorKind::RandK && static_cast<std::size_t>(x.size()) != spec.d()) {
    throw ArgumentError("rand-k compressor configured for d = " + std::to_string(spec.d()) +
                        " applied to a vector of dimension " + std::to_string(x.size()));
  }
}

}  // namespace

CompressorSpec CompressorSpec::identity() { return {CompressorKind::Identity, 0, 0, 1.0, 0.0}; }

CompressorSpec CompressorSpec::rand_k(std::size_t k, std::size_t d) {
  if (d == 0 || k == 0 || k > d) {
    throw ConfigError("rand-k needs 1 <= k <= d, got k = " + std::to_string(k) +
                      ", d = " + std::to_string(d));
  }
  const double omega = static_cast<double>(d) / static_cast<double>(k) - 1.0;
  return {CompressorKind::RandK, k, d, 1.0, omega};
}

CompressorSpec CompressorSpec::bernoulli(double q) {
  if (!(q > 0.0 && q <= 1.0)) {
    throw ConfigError("bernoulli compressor needs q in (0, 1], got " + std::to_string(q));
  }
  return {CompressorKind::BernoulliScale, 0, 0, q, 1.0 / q - 1.0};
}

std::string CompressorSpec::describe() const {
  switch (kind_) {
    case CompressorKind::Identity:
      return "identity";
    case CompressorKind::RandK:
      return "randk(k=" + std::to_string(k_) + ",d=" + std::to_string(d_) + ")";
    case CompressorKind::BernoulliScale:
      return "bernoulli(q=" + std::to_string(q_) + ")";
  }
  return "unknown";
}

Vector compress(const CompressorSpec& spec, const Vector& x, RandomStream& rng) {
  check_dimension(spec, x);
  switch (spec.kind()) {
    case CompressorKind::Identity:
      return x;
    case CompressorKind::RandK: {
      const std::size_t d = spec.d();
      const std::size_t k = spec.k();
      const double scale = static_cast<double>(d) / static_cast<double>(k);
      // Partial Fisher-Yates: the first k slots hold a uniform k-subset.
      std::vector<std::size_t> index(d);
      std::iota(index.begin(), index.end(), std::size_t{0});
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t r = j + rng.uniform_index(d - j);
        std::swap(index[j], index[r]);
      }
      Vector out = Vector::Zero(x.size());
      for (std::size_t j = 0; j < k; ++j) {
        const auto c = static_cast<Eigen::Index>(index[j]);
        out(c) = scale * x(c);
      }
      return out;
    }
    case CompressorKind::BernoulliScale: {
      const double q = spec.q();
      Vector out = Vector::Zero(x.size());
      for (Eigen::Index c = 0; c < x.size(); ++c) {
        if (rng.uniform01() < q) out(c) = x(c) / q;
      }
      return out;
    }
  }
  return x;
}

bool enumerable(const CompressorSpec& spec, std::size_t d) {
  switch (spec.kind()) {
    case CompressorKind::Identity:
      return true;
    case CompressorKind::RandK:
      return spec.d() == d && binomial_capped(d, spec.k(), kMaxRandKSubsets) <= kMaxRandKSubsets;
    case CompressorKind::BernoulliScale:
      return d <= kMaxBernoulliDim;
  }
  return false;
}

CompressorMoments exact_moments(const CompressorSpec& spec, const Vector& x) {
  check_dimension(spec, x);
  const auto d = static_cast<std::size_t>(x.size());
  if (!enumerable(spec, d)) {
    throw UnsupportedSizeError("outcome space of " + spec.describe() + " in dimension " +
                               std::to_string(d) + " is too large to enumerate");
  }
  CompressorMoments out{Vector::Zero(x.size()), 0.0};
  switch (spec.kind()) {
    case CompressorKind::Identity:
      out.mean = x;
      return out;
    case CompressorKind::RandK: {
      const std::size_t k = spec.k();
      const double scale = static_cast<double>(d) / static_cast<double>(k);
      const double prob = 1.0 / static_cast<double>(binomial_capped(d, k, kMaxRandKSubsets));
      // Walk all k-subsets in lexicographic order.
      std::vector<std::size_t> subset(k);
      std::iota(subset.begin(), subset.end(), std::size_t{0});
      while (true) {
        Vector outcome = Vector::Zero(x.size());
        for (auto c : subset) {
          const auto idx = static_cast<Eigen::Index>(c);
          outcome(idx) = scale * x(idx);
        }
        out.mean += prob * outcome;
        out.mse += prob * (outcome - x).squaredNorm();
        std::size_t pos = k;
        while (pos > 0 && subset[pos - 1] == d - k + pos - 1) --pos;
        if (pos == 0) break;
        ++subset[pos - 1];
        for (std::size_t j = pos; j < k; ++j) subset[j] = subset[j - 1] + 1;
      }
      return out;
    }
    case CompressorKind::BernoulliScale: {
      const double q = spec.q();
      for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << d); ++mask) {
        Vector outcome = Vector::Zero(x.size());
        double prob = 1.0;
        for (std::size_t c = 0; c < d; ++c) {
          const auto idx = static_cast<Eigen::Index>(c);
          if (mask & (std::uint64_t{1} << c)) {
            outcome(idx) = x(idx) / q;
            prob *= q;
          } else {
            prob *= 1.0 - q;
          }
        }
        if (prob == 0.0) continue;
        out.mean += prob * outcome;
        out.mse += prob * (outcome - x).squaredNorm();
      }
      return out;
    }
  }
  return out;
}

}  // namespace sgdlab
