#pragma once

#include <utility>
#include <vector>

#include "covclt/clt.hpp"
#include "covclt/common.hpp"
#include "covclt/testfn.hpp"

namespace covclt::hs {

/// chi = 1 on [0, y0], exp(1 - 1/(1 - s^2)) with s = (y - y0)/(y1 - y0) on
/// (y0, y1), 0 beyond; even in y.
struct CutoffProfile {
  double y0 = 0.25;
  double y1 = 0.75;

  double chi(double y) const;
  double dchi(double y) const;
  void validate() const;
};

/// dbar Phi_k(f)(x + iy), dbar = d/dx + i d/dy, for y > 0. k defaults to
/// min(2, f.order()).
Complex extension_dbar(const SmoothTestFunction& f, const CutoffProfile& cutoff, Complex z, int k = -1);

/// Phi_k(f)(x + iy) itself.
Complex extension(const SmoothTestFunction& f, const CutoffProfile& cutoff, Complex z, int k = -1);

struct TraceIdentityResult {
  double hs_value = 0.0;
  double exact = 0.0;
  double deviation = 0.0;
  /// |difference between the last two grid levels|.
  double truncation_estimate = 0.0;
};

/// (1/pi) Re \int dbar Phi_k(f)(z) tr (A - z)^{-1} dz against sum_i f(lambda_i(A)).
TraceIdentityResult hs_trace_identity_check(const MatrixXcd& a, const SmoothTestFunction& f,
                                            const CutoffProfile& cutoff = {}, int k = -1);

/// Support intervals of the limiting density, from a density scan on the default grid.
std::vector<std::pair<double, double>> support_intervals(const deteq::WeightedAtoms& atoms);

/// N \int f dF_n, adaptive over the support intervals plus the atom at zero.
double ls_mean(const PopulationModel& model, const SmoothTestFunction& f, Diagnostics* diag = nullptr);

struct HSOptions {
  CutoffProfile cutoff;
  /// Order of the quasi-analytic extension; clipped to f.order().
  int k = 2;
  double y_floor = 1e-3;
  /// Maximal x-panel width at the coarsest level.
  double x_panel = 1.0;
  /// Gauss panels between y_floor and y0 at the coarsest level.
  int y_panels = 3;
  /// Relative change between consecutive levels that ends the refinement.
  double rel_tol = 1e-4;
  int max_levels = 3;
  int threads = 1;
};

/// The three kernel integrals: cov = I0 + |V|^2 I1 + kappa I2.
struct CovarianceParts {
  double I0 = 0.0;
  double I1 = 0.0;
  double I2 = 0.0;
  double value = 0.0;
  /// Relative change between the last two levels.
  double rel_change = 0.0;
  int levels = 0;
  /// Upper edge A of the integration rectangle.
  double A = 0.0;
};

/// Covariance of the limiting Gaussian for (f, g) from the planar double integral.
CovarianceParts clt_covariance_hs(const clt::KernelCouplings& k, const clt::MomentProfile& profile,
                                  const SmoothTestFunction& f, const SmoothTestFunction& g,
                                  const HSOptions& opts = {});
CovarianceParts clt_covariance_hs(const PopulationModel& model, const clt::MomentProfile& profile,
                                  const SmoothTestFunction& f, const SmoothTestFunction& g,
                                  const HSOptions& opts = {});

struct BoundaryCovariance {
  /// \iint_{S^2} f'(x) g'(y) ln|(t~(x) - conj t~(y)) / (t~(x) - t~(y))| dx dy
  double log_term = 0.0;
  /// sum_ab Fbar_a G_ab / n Gbar_b with Fbar_a = \int f' Im(-1/(1 + t~ lambda_a)).
  double cumulant_term = 0.0;
  double value = 0.0;
};

/// Covariance from boundary values on the support. Needs real R and V in {0, 1}.
BoundaryCovariance clt_covariance_boundary(const clt::KernelCouplings& k,
                                           const clt::MomentProfile& profile,
                                           const SmoothTestFunction& f, const SmoothTestFunction& g,
                                           double tol = 1e-9);
BoundaryCovariance clt_covariance_boundary(const PopulationModel& model,
                                           const clt::MomentProfile& profile,
                                           const SmoothTestFunction& f, const SmoothTestFunction& g,
                                           double tol = 1e-9);

/// Both sides of the white-case cumulant identity for ratio c, with the
/// common factor kappa dropped: lhs from boundary values of t, rhs by
/// Gauss-Chebyshev against the arcsine weight.
std::pair<double, double> mp_cumulant_equality(double c, const SmoothTestFunction& f,
                                               const SmoothTestFunction& g);

struct BiasFunctional {
  double value = 0.0;
  /// Planar integral with k = min(5, f.order()); NaN when not requested.
  double hs_value = 0.0;
  int hs_order = 0;
  /// Integral at each ladder step, finest last.
  std::vector<double> ladder;
  std::vector<double> eps;
  double spread = 0.0;
  bool stable = false;
};

struct BiasOptions {
  double eps0 = 0.04;
  int levels = 6;
  double tol = 1e-11;
  bool hs_cross_check = false;
  HSOptions hs;
};

/// Z^2(f) = (1/pi) lim \int f(x) Im B(x + i eps) dx by extrapolation in sqrt(eps).
BiasFunctional bias_functional(const clt::KernelCouplings& k, const clt::MomentProfile& profile,
                               const SmoothTestFunction& f, const BiasOptions& opts = {});
BiasFunctional bias_functional(const PopulationModel& model, const clt::MomentProfile& profile,
                               const SmoothTestFunction& f, const BiasOptions& opts = {});

/// Planar form (1/pi) Re \int dbar Phi_k(f) B.
double bias_functional_hs(const clt::KernelCouplings& k, const clt::MomentProfile& profile,
                          const SmoothTestFunction& f, int order, const HSOptions& opts = {});

struct UpsilonResult {
  double value = 0.0;
  std::vector<double> eps;
  std::vector<double> ladder;
};

/// -(1/4 pi^2) lim \iint f(x) g(y) {Th(+,+) + Th(-,-) - Th(-,+) - Th(+,-)} dx dy.
UpsilonResult upsilon_cross_check(const clt::KernelCouplings& k, const clt::MomentProfile& profile,
                                  const SmoothTestFunction& f, const SmoothTestFunction& g,
                                  const std::vector<double>& eps = {0.08, 0.04, 0.02});

/// Predicted law of (L_n(f_1), ..., L_n(f_m)).
struct GaussianLaw {
  VectorXd mean;
  MatrixXd covariance;
  std::vector<std::string> warnings;

  double variance(Index i) const { return covariance(i, i); }
};

enum class CovarianceMethod { Auto, Boundary, HS };

/// Means from bias_functional, covariances from the boundary form when it
/// applies (real R, V in {0, 1}) and from the planar form otherwise. `tol` is
/// the boundary-form target; the bias quadrature runs at tol / 100.
GaussianLaw gaussian_law(const PopulationModel& model, const clt::MomentProfile& profile,
                         const std::vector<SmoothTestFunction>& fs,
                         CovarianceMethod method = CovarianceMethod::Auto, const HSOptions& opts = {},
                         double tol = 1e-9);

}  // namespace covclt::hs
