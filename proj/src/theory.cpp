#include "sgdlab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sgdlab/errors.hpp"

namespace sgdlab {
namespace {

// Relative slack when comparing a stepsize against its admissible maximum,
// so that gamma = max_stepsize round-tripped through text is accepted.
constexpr double kStepsizeSlack = 1e-12;

double rate(const Certificate& cert, double mu, double gamma, double M) {
  const double gd = gamma * mu;
  if (!cert.has_sigma) return gd;
  return std::min(gd, cert.rho - cert.B / M);
}

}  // namespace

double default_M(const Certificate& cert) {
  if (!cert.has_sigma) return 0.0;
  return 2.0 * cert.B / cert.rho;
}

double max_stepsize(const Certificate& cert, double mu, double M) {
  cert.validate();
  if (!(mu > 0.0)) throw ArgumentError("mu must be positive");
  if (!(M >= 0.0)) throw ArgumentError("Lyapunov weight M must be non-negative");
  if (cert.has_sigma && !(M > cert.B / cert.rho)) {
    std::ostringstream msg;
    msg << "Lyapunov weight M = " << M << " must exceed B/rho = " << cert.B / cert.rho;
    throw CertificateError(msg.str(), 0.0);
  }
  const double denom = cert.A + cert.C * M;
  if (denom <= 0.0) return 1.0 / mu;
  return std::min(1.0 / mu, 1.0 / denom);
}

BoundCurve bound_curve(const Certificate& cert, double mu, double gamma, double M, double V0) {
  const double gmax = max_stepsize(cert, mu, M);
  if (!(gamma > 0.0) || gamma > gmax * (1.0 + kStepsizeSlack)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "stepsize gamma = " << gamma << " violates the stepsize condition; max_stepsize = " << gmax;
    throw CertificateError(msg.str(), gmax);
  }
  if (!(V0 >= 0.0)) throw ArgumentError("V0 must be non-negative");
  const double r = std::min(rate(cert, mu, gamma, M), 1.0);
  BoundCurve curve;
  curve.gamma = gamma;
  curve.M = M;
  curve.contraction = 1.0 - r;
  curve.floor = (cert.D1 + M * cert.D2) * gamma * gamma / r;
  curve.V0 = V0;
  return curve;
}

double bound_at(const BoundCurve& curve, std::size_t k) {
  return curve.V0 * std::pow(curve.contraction, static_cast<double>(k)) + curve.floor;
}

std::vector<double> recursion_oracle(const Certificate& cert, double mu, double gamma, double M,
                                     double V0, std::size_t K) {
  const BoundCurve curve = bound_curve(cert, mu, gamma, M, V0);
  const double drift = (cert.D1 + M * cert.D2) * gamma * gamma;
  std::vector<double> out;
  out.reserve(K + 1);
  double v = V0;
  out.push_back(v);
  for (std::size_t k = 0; k < K; ++k) {
    v = curve.contraction * v + drift;
    out.push_back(v);
  }
  return out;
}

}  // namespace sgdlab
