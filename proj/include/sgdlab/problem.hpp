#pragma once

#include <cstddef>
#include <cstdint>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace sgdlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// f_i(x) = 1/2 x'Ax - b'x with A symmetric positive semidefinite.
struct QuadraticComponent {
  Matrix A;
  Vector b;
};

/// f_i(x) = log(1 + exp(-y a'x)) + lambda/2 |x|^2, y in {-1, +1}.
struct LogisticComponent {
  Vector a;
  double y = 1.0;
  double lambda = 0.0;
};

enum class ProblemFamily { Quadratic, Logistic };

/// Strongly convex finite sum f = (1/n) sum_i f_i over a single component family.
class FiniteSumProblem {
 public:
  static FiniteSumProblem quadratic(std::vector<QuadraticComponent> components);
  static FiniteSumProblem logistic(std::vector<LogisticComponent> components);

  std::size_t n() const { return n_; }
  std::size_t d() const { return d_; }
  ProblemFamily family() const;

  double eval_f(const Vector& x) const;
  double eval_f_i(std::size_t i, const Vector& x) const;
  Vector eval_grad_i(std::size_t i, const Vector& x) const;
  /// (1/n) sum_i grad f_i(x), summed left to right.
  Vector eval_full_grad(const Vector& x) const;

  const std::vector<QuadraticComponent>& quadratic_components() const;
  const std::vector<LogisticComponent>& logistic_components() const;

 private:
  using Components = std::variant<std::vector<QuadraticComponent>, std::vector<LogisticComponent>>;

  FiniteSumProblem(Components components, std::size_t n, std::size_t d)
      : components_(std::move(components)), n_(n), d_(d) {}

  void check_point(const Vector& x) const;
  void check_index(std::size_t i) const;

  Components components_;
  std::size_t n_;
  std::size_t d_;
};

struct ProblemConstants {
  double L = 0.0;
  double mu = 0.0;
  std::vector<double> L_i;
  double L_max = 0.0;
  Vector x_star;
  double f_star = 0.0;
  /// (1/n) sum_i |grad f_i(x*)|^2.
  double sigma_star_sq = 0.0;
  /// Same quantity under the name used for compressed methods.
  double zeta_star_sq = 0.0;
};

/// Smoothness and strong convexity constants, the optimum, and the variance at
/// the optimum. Throws ProblemError when mu <= 0 and DiagnosticError when the
/// optimum cannot be certified.
ProblemConstants compute_constants(const FiniteSumProblem& problem);

/// Cap on gradient-descent iterations for the logistic optimum.
inline constexpr std::size_t kOptimumIterationCap = 1'000'000;

// Seeded synthetic generators.

/// Symmetric matrix Q' diag(eigenvalues) Q with Q a random orthogonal matrix.
Matrix random_spd(const Vector& eigenvalues, std::uint64_t seed);

struct QuadraticSuiteSpec {
  std::size_t n = 20;
  std::size_t d = 5;
  /// Each component spectrum spans [eig_min, eig_max] (both ends included when d >= 2).
  double eig_min = 1.0;
  double eig_max = 10.0;
  /// Scale of the Gaussian linear terms b_i; ignored for interpolation suites.
  double b_scale = 1.0;
  /// When true every component is minimized at one shared point.
  bool interpolation = false;
  std::uint64_t seed = 1;
};

FiniteSumProblem make_random_quadratic(const QuadraticSuiteSpec& spec);

struct LogisticSuiteSpec {
  std::size_t n = 50;
  std::size_t d = 5;
  double lambda = 0.1;
  std::uint64_t seed = 1;
};

FiniteSumProblem make_random_logistic(const LogisticSuiteSpec& spec);

}  // namespace sgdlab
