#pragma once

#include <cstddef>
#include <vector>

#include "sgdlab/estimator.hpp"

namespace sgdlab {

/// Right-hand side of the linear-convergence bound
///   E[V_k] <= contraction^k V0 + floor,  V_k = |x^k - x*|^2 + M gamma^2 sigma_k^2.
struct BoundCurve {
  double gamma = 0.0;
  double M = 0.0;
  /// 1 - min{gamma mu, rho - B/M}; the rho branch is dropped without a sigma sequence.
  double contraction = 1.0;
  /// (D1 + M D2) gamma^2 / min{gamma mu, rho - B/M}.
  double floor = 0.0;
  double V0 = 0.0;
};

/// 0 without a sigma sequence, otherwise 2B/rho (so that rho - B/M = rho/2).
double default_M(const Certificate& cert);

/// min{1/mu, 1/(A + C M)}. Throws CertificateError when B > 0 and M <= B/rho.
double max_stepsize(const Certificate& cert, double mu, double M);

/// Throws CertificateError (carrying the admissible maximum) when gamma exceeds max_stepsize.
BoundCurve bound_curve(const Certificate& cert, double mu, double gamma, double M, double V0);

/// V0 contraction^k + floor.
double bound_at(const BoundCurve& curve, std::size_t k);

/// Iterates v_{k+1} = contraction v_k + (D1 + M D2) gamma^2 from v_0 = V0; K + 1 values.
std::vector<double> recursion_oracle(const Certificate& cert, double mu, double gamma, double M,
                                     double V0, std::size_t K);

}  // namespace sgdlab
