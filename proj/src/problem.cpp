#include "sgdlab/problem.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sgdlab/errors.hpp"
#include "sgdlab/random.hpp"

namespace sgdlab {
namespace {

constexpr double kSymmetryTolerance = 1e-12;
constexpr double kOptimalityTolerance = 1e-10;

// log(1 + exp(t)) without overflow.
double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

// 1 / (1 + exp(-t)) without overflow.
double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double max_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().maxCoeff();
}

}  // namespace

FiniteSumProblem FiniteSumProblem::quadratic(std::vector<QuadraticComponent> components) {
  if (components.empty()) throw ArgumentError("problem needs at least one component");
  const auto d = static_cast<std::size_t>(components.front().b.size());
  if (d == 0) throw ArgumentError("problem dimension must be at least 1");
  for (std::size_t i = 0; i < components.size(); ++i) {
    const auto& c = components[i];
    if (static_cast<std::size_t>(c.b.size()) != d || static_cast<std::size_t>(c.A.rows()) != d ||
        static_cast<std::size_t>(c.A.cols()) != d) {
      throw ArgumentError("component " + std::to_string(i) + " does not have dimension " +
                          std::to_string(d));
    }
    if ((c.A - c.A.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance) {
      throw ArgumentError("component " + std::to_string(i) + " has a non-symmetric A");
    }
  }
  const std::size_t n = components.size();
  return FiniteSumProblem(std::move(components), n, d);
}

FiniteSumProblem FiniteSumProblem::logistic(std::vector<LogisticComponent> components) {
  if (components.empty()) throw ArgumentError("problem needs at least one component");
  const auto d = static_cast<std::size_t>(components.front().a.size());
  if (d == 0) throw ArgumentError("problem dimension must be at least 1");
  for (std::size_t i = 0; i < components.size(); ++i) {
    const auto& c = components[i];
    if (static_cast<std::size_t>(c.a.size()) != d) {
      throw ArgumentError("component " + std::to_string(i) + " does not have dimension " +
                          std::to_string(d));
    }
    if (c.y != 1.0 && c.y != -1.0) {
      throw ArgumentError("component " + std::to_string(i) + " has a label outside {-1, +1}");
    }
    if (!(c.lambda >= 0.0)) {
      throw ArgumentError("component " + std::to_string(i) + " has a negative ridge coefficient");
    }
  }
  const std::size_t n = components.size();
  return FiniteSumProblem(std::move(components), n, d);
}

ProblemFamily FiniteSumProblem::family() const {
  return std::holds_alternative<std::vector<QuadraticComponent>>(components_) ? ProblemFamily::Quadratic
                                                                              : ProblemFamily::Logistic;
}

const std::vector<QuadraticComponent>& FiniteSumProblem::quadratic_components() const {
  return std::get<std::vector<QuadraticComponent>>(components_);
}

const std::vector<LogisticComponent>& FiniteSumProblem::logistic_components() const {
  return std::get<std::vector<LogisticComponent>>(components_);
}

void FiniteSumProblem::check_point(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != d_) {
    throw ArgumentError("point has dimension " + std::to_string(x.size()) + ", expected " +
                        std::to_string(d_));
  }
}

void FiniteSumProblem::check_index(std::size_t i) const {
  if (i >= n_) {
    throw ArgumentError("component index " + std::to_string(i) + " out of range [0, " +
                        std::to_string(n_) + ")");
  }
}

double FiniteSumProblem::eval_f_i(std::size_t i, const Vector& x) const {
  check_index(i);
  check_point(x);
  if (family() == ProblemFamily::Quadratic) {
    const auto& c = quadratic_components()[i];
    return 0.5 * x.dot(c.A * x) - c.b.dot(x);
  }
  const auto& c = logistic_components()[i];
  return softplus(-c.y * c.a.dot(x)) + 0.5 * c.lambda * x.squaredNorm();
}

double FiniteSumProblem::eval_f(const Vector& x) const {
  double total = 0.0;
  for (std::size_t i = 0; i < n_; ++i) total += eval_f_i(i, x);
  return total / static_cast<double>(n_);
}

Vector FiniteSumProblem::eval_grad_i(std::size_t i, const Vector& x) const {
  check_index(i);
  check_point(x);
  if (family() == ProblemFamily::Quadratic) {
    const auto& c = quadratic_components()[i];
    return c.A * x - c.b;
  }
  const auto& c = logistic_components()[i];
  const double margin = c.y * c.a.dot(x);
  return (-c.y * sigmoid(-margin)) * c.a + c.lambda * x;
}

Vector FiniteSumProblem::eval_full_grad(const Vector& x) const {
  check_point(x);
  Vector total = Vector::Zero(static_cast<Eigen::Index>(d_));
  for (std::size_t i = 0; i < n_; ++i) total += eval_grad_i(i, x);
  return total / static_cast<double>(n_);
}

ProblemConstants compute_constants(const FiniteSumProblem& problem) {
  const auto n = problem.n();
  const auto d = static_cast<Eigen::Index>(problem.d());
  ProblemConstants out;
  out.L_i.resize(n);

  if (problem.family() == ProblemFamily::Quadratic) {
    const auto& comps = problem.quadratic_components();
    Matrix a_bar = Matrix::Zero(d, d);
    Vector b_bar = Vector::Zero(d);
    for (std::size_t i = 0; i < n; ++i) {
      out.L_i[i] = max_eigenvalue(comps[i].A);
      a_bar += comps[i].A;
      b_bar += comps[i].b;
    }
    a_bar /= static_cast<double>(n);
    b_bar /= static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a_bar, Eigen::EigenvaluesOnly);
    out.mu = solver.eigenvalues().minCoeff();
    out.L = solver.eigenvalues().maxCoeff();
    if (!(out.mu > 0.0) || out.mu < 1e-13 * out.L) {
      throw ProblemError("problem is not strongly convex: mu = " + std::to_string(out.mu));
    }
    const auto ldlt = a_bar.ldlt();
    out.x_star = ldlt.solve(b_bar);
    // One step of iterative refinement.
    out.x_star += ldlt.solve(b_bar - a_bar * out.x_star);
  } else {
    const auto& comps = problem.logistic_components();
    Matrix gram = Matrix::Zero(d, d);
    double lambda_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      out.L_i[i] = 0.25 * comps[i].a.squaredNorm() + comps[i].lambda;
      gram += comps[i].a * comps[i].a.transpose();
      lambda_mean += comps[i].lambda;
    }
    gram /= static_cast<double>(n);
    lambda_mean /= static_cast<double>(n);
    out.L = 0.25 * max_eigenvalue(gram) + lambda_mean;
    // The data term has no global curvature lower bound beyond zero.
    out.mu = lambda_mean;
    if (!(out.mu > 0.0)) {
      throw ProblemError("logistic problem needs a positive ridge coefficient for strong convexity");
    }
    Vector x = Vector::Zero(d);
    const double step = 1.0 / out.L;
    bool converged = false;
    for (std::size_t it = 0; it < kOptimumIterationCap; ++it) {
      const Vector g = problem.eval_full_grad(x);
      if (g.norm() <= 1e-12 * std::max(1.0, x.norm())) {
        converged = true;
        break;
      }
      x -= step * g;
    }
    if (!converged) {
      throw DiagnosticError("gradient descent for the logistic optimum did not converge within " +
                            std::to_string(kOptimumIterationCap) + " iterations");
    }
    out.x_star = std::move(x);
  }

  out.L_max = *std::max_element(out.L_i.begin(), out.L_i.end());
  const double grad_norm = problem.eval_full_grad(out.x_star).norm();
  if (grad_norm > kOptimalityTolerance * std::max(1.0, out.x_star.norm())) {
    throw DiagnosticError("optimum not certified: |grad f(x*)| = " + std::to_string(grad_norm));
  }
  out.f_star = problem.eval_f(out.x_star);
  double variance = 0.0;
  for (std::size_t i = 0; i < n; ++i) variance += problem.eval_grad_i(i, out.x_star).squaredNorm();
  out.sigma_star_sq = variance / static_cast<double>(n);
  out.zeta_star_sq = out.sigma_star_sq;
  return out;
}

Matrix random_spd(const Vector& eigenvalues, std::uint64_t seed) {
  const auto d = eigenvalues.size();
  RandomStream rng(seed);
  Matrix gaussian(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) gaussian(i, j) = rng.normal();
  const Matrix q = gaussian.householderQr().householderQ();
  Matrix out = q.transpose() * eigenvalues.asDiagonal() * q;
  // Exact symmetry; the product is symmetric only up to rounding.
  return 0.5 * (out + out.transpose());
}

FiniteSumProblem make_random_quadratic(const QuadraticSuiteSpec& spec) {
  if (spec.n == 0 || spec.d == 0) throw ArgumentError("generator needs n >= 1 and d >= 1");
  if (!(spec.eig_min >= 0.0) || !(spec.eig_max >= spec.eig_min) || !(spec.eig_max > 0.0)) {
    throw ArgumentError("generator needs 0 <= eig_min <= eig_max and eig_max > 0");
  }
  const auto d = static_cast<Eigen::Index>(spec.d);
  RandomStream rng(spec.seed);
  Vector shared(d);
  for (Eigen::Index j = 0; j < d; ++j) shared(j) = rng.normal();

  std::vector<QuadraticComponent> comps;
  comps.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    Vector eig(d);
    eig(0) = spec.eig_max;
    if (d >= 2) eig(d - 1) = spec.eig_min;
    for (Eigen::Index j = 1; j + 1 < d; ++j) {
      eig(j) = spec.eig_min + (spec.eig_max - spec.eig_min) * rng.uniform01();
    }
    QuadraticComponent c;
    c.A = random_spd(eig, rng.next_u64());
    if (spec.interpolation) {
      c.b = c.A * shared;
    } else {
      c.b.resize(d);
      for (Eigen::Index j = 0; j < d; ++j) c.b(j) = spec.b_scale * rng.normal();
    }
    comps.push_back(std::move(c));
  }
  return FiniteSumProblem::quadratic(std::move(comps));
}

FiniteSumProblem make_random_logistic(const LogisticSuiteSpec& spec) {
  if (spec.n == 0 || spec.d == 0) throw ArgumentError("generator needs n >= 1 and d >= 1");
  const auto d = static_cast<Eigen::Index>(spec.d);
  RandomStream rng(spec.seed);
  Vector truth(d);
  for (Eigen::Index j = 0; j < d; ++j) truth(j) = rng.normal();

  std::vector<LogisticComponent> comps;
  comps.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    LogisticComponent c;
    c.a.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) c.a(j) = rng.normal();
    // Noisy labels from a planted linear model.
    const double logit = c.a.dot(truth) + rng.normal();
    c.y = logit >= 0.0 ? 1.0 : -1.0;
    c.lambda = spec.lambda;
    comps.push_back(std::move(c));
  }
  return FiniteSumProblem::logistic(std::move(comps));
}

}  // namespace sgdlab
