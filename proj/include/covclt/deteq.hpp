#pragma once

#include <optional>
#include <vector>

#include "covclt/common.hpp"
#include "covclt/model.hpp"

namespace covclt::deteq {

/// Spectral data seen by the canonical equation: atoms lambda_a with weights
/// omega_a = m_a / n, so that (1/n) tr g(R) = sum_a omega_a g(lambda_a) and
/// sum_a omega_a = c. Limit measures F^R enter with omega_a = c * w_a.
struct WeightedAtoms {
  VectorXd value;
  VectorXd weight;
  double c = 1.0;

  static WeightedAtoms from_model(const PopulationModel& model);
  /// `mass` must be a probability vector over `value`.
  static WeightedAtoms from_measure(VectorXd value, const VectorXd& mass, double c);

  double lambda_max() const;
  /// lambda_max * (1 + sqrt(c))^2.
  double support_bound() const;
};

struct StieltjesState {
  Complex z;
  Complex t;
  Complex t_tilde;
  /// |t~ - F(t~)| / max(1, |t~|) for the fixed-point map F of the canonical equation.
  double residual = 0.0;
  int iterations = 0;
};

struct SolverOptions {
  double tol = 1e-13;
  int max_iter = 20000;
  std::optional<Complex> warm_start;
};

/// Solves the canonical equation for t~(z) and returns (t, t~).
/// Throws std::invalid_argument for z in [0, inf) and NumericalError when the
/// iteration does not reach the tolerance.
StieltjesState solve_canonical(const WeightedAtoms& atoms, Complex z, const SolverOptions& opts = {});
StieltjesState solve_canonical(const PopulationModel& model, Complex z, const SolverOptions& opts = {});

/// Closed-form Marchenko-Pastur Stieltjes transform (R = I, ratio c).
Complex mp_closed_form(double c, Complex z);

struct ResolventEquivalent {
  Complex z;
  MatrixXcd T;
  MatrixXcd T_transpose;
  /// min_i |1 + t~ lambda_i|
  double min_pivot = 0.0;
};

/// Entries -1 / (z (1 + t~ lambda_i)) of T in the eigenbasis of R.
VectorXcd resolvent_eigenvalues(const PopulationModel& model, const StieltjesState& state);

/// Assembles T and T^T. Throws NumericalError when some |1 + t~ lambda_i| < 1e-14
/// or when (1/N) tr T disagrees with t beyond 10 * tol.
ResolventEquivalent build_resolvent_equivalent(const PopulationModel& model,
                                               const StieltjesState& state,
                                               double tol = 1e-13);

struct DeterminantIdentity {
  /// 1 - |z|^2 |t~|^2 (1/n) tr(R T R T^*)
  double lhs = 0.0;
  /// |t~|^2 Im z / Im t~
  double rhs = 0.0;
  double relative_error = 0.0;
};

/// Both sides of the imaginary-part identity of the canonical equation, with
/// the trace taken over the dense matrices R and T. Needs Im z != 0.
DeterminantIdentity determinant_identity(const PopulationModel& model, Complex z,
                                         const SolverOptions& opts = {});

/// Analytic derivative of t~. Throws NumericalError when the denominator is
/// below 1e-12 in magnitude.
Complex t_tilde_derivative(const WeightedAtoms& atoms, const StieltjesState& state);
Complex t_tilde_derivative(const PopulationModel& model, const StieltjesState& state);

/// Derivative of t~ by the trapezoidal rule on a circle around z.
Complex t_tilde_derivative_cauchy(const WeightedAtoms& atoms, Complex z, int nodes = 32);

struct BoundaryOptions {
  double eps0 = 0.1;
  int levels = 24;
  /// Target for the reported stabilization error.
  double target = 1e-8;
  /// Polish the extrapolated value with Newton's method at the real point.
  bool polish = true;
};

struct BoundaryValue {
  double x = 0.0;
  Complex t_tilde;
  Complex t;
  double error = 0.0;
  bool stable = false;
  /// Extrapolated values of the last two ladder levels.
  Complex last;
  Complex prev;
  double eps_used = 0.0;
};

/// Limit of t~(x + i eps) as eps decreases to 0, x != 0.
BoundaryValue boundary_value(const WeightedAtoms& atoms, double x, const BoundaryOptions& opts = {});
BoundaryValue boundary_value(const PopulationModel& model, double x, const BoundaryOptions& opts = {});

struct SpectralSupport {
  std::vector<double> grid;
  std::vector<double> density;
  std::vector<std::pair<double, double>> support_intervals;
  double epsilon_used = 0.0;
  /// Mass of the limiting measure at zero.
  double atom_at_zero = 0.0;
  /// Trapezoidal integral of the density over the grid.
  double mass = 0.0;
  std::vector<std::string> warnings;
};

/// Density Im t(x + i0) / pi on `grid` and the maximal runs where it exceeds
/// `threshold`, with edges refined by bisection to 1e-6.
SpectralSupport density_and_support(const WeightedAtoms& atoms, const std::vector<double>& grid,
                                    double threshold = 1e-4);
SpectralSupport density_and_support(const PopulationModel& model, const std::vector<double>& grid,
                                    double threshold = 1e-4);

/// `count` equispaced points covering [0, support_bound * 1.05].
std::vector<double> default_support_grid(const WeightedAtoms& atoms, int count = 2048);

}  // namespace covclt::deteq
