#pragma once

#include <utility>

#include "covclt/common.hpp"
#include "covclt/deteq.hpp"
#include "covclt/model.hpp"

namespace covclt::clt {

/// Second moment V = E X^2 and fourth cumulant kappa = E|X|^4 - |V|^2 - 2 of
/// the entry distribution.
struct MomentProfile {
  Complex V = 0.0;
  double kappa = 0.0;

  double v2() const { return std::norm(V); }
  /// Throws std::invalid_argument when |V| > 1 or kappa < -1 - |V|^2.
  void validate() const;

  static MomentProfile complex_gaussian() { return {0.0, 0.0}; }
  static MomentProfile real_gaussian() { return {1.0, 0.0}; }
  static MomentProfile real_rademacher() { return {1.0, -2.0}; }
};

/// Everything the kernels need from the population: the weighted atoms of the
/// canonical equation and the overlap couplings, divided by n.
struct KernelCouplings {
  deteq::WeightedAtoms atoms;
  /// transpose_overlap / n; drives the A kernel.
  MatrixXd transpose_coupling;
  /// diagonal_overlap / n; drives Theta_2 and B_2.
  MatrixXd diagonal_coupling;
  /// Both couplings equal diag(weight).
  bool diagonal = true;
  /// The transpose coupling equals diag(weight) (R real).
  bool transpose_diagonal = true;

  static KernelCouplings from_model(const PopulationModel& model);
  /// Limit objects for F^R = sum_a mass_a delta_{value_a} and ratio c.
  static KernelCouplings from_measure(VectorXd value, const VectorXd& mass, double c);

  Index size() const { return atoms.value.size(); }
};

/// Per-point quantities shared by all kernels:
///   e_a = 1 / (1 + t~ lambda_a), h_a = t~ lambda_a e_a, dh_a = t~' lambda_a e_a^2.
struct KernelNode {
  Complex z;
  Complex t_tilde;
  Complex dt_tilde;
  VectorXcd e;
  VectorXcd h;
  VectorXcd dh;

  KernelNode conj() const;
};

KernelNode make_node(const KernelCouplings& k, Complex z, const deteq::SolverOptions& opts = {});
KernelNode make_node(const KernelCouplings& k, const deteq::StieltjesState& state);

struct AKernel {
  Complex A;
  Complex A0;
  /// |(1 - A0) - (z1 - z2) t~1 t~2 / (t~1 - t~2)| relative to |1 - A0|; 0 when z1 == z2.
  double identity_defect = 0.0;
};

struct CovarianceKernel {
  Complex z1;
  Complex z2;
  Complex theta0;
  Complex theta1;
  Complex theta2;
  Complex theta;
  Complex A;
  Complex A0;
};

struct BiasValue {
  Complex z;
  Complex B1;
  Complex B2;
  Complex B;
};

AKernel a_kernel(const KernelCouplings& k, const KernelNode& n1, const KernelNode& n2);

/// t~'1 t~'2 / (t~1 - t~2)^2 - 1 / (z1 - z2)^2. Coincident points are moved
/// apart by 1e-5 i sign(Im z2) with a warning and evaluated in the A0 form.

Complex theta0(const KernelCouplings& k, Complex z1, Complex z2, Diagnostics* diag = nullptr);
Complex theta0(const KernelNode& n1, const KernelNode& n2);
/// d/dz2 { dA0/dz1 / (1 - A0) } with analytic derivatives of A0. Stable for
/// z1 close to z2, where the definition above cancels.
Complex theta0_alternate(const KernelCouplings& k, const KernelNode& n1, const KernelNode& n2);

/// d/dz2 { dA/dz1 / (1 - |V|^2 A) } with analytic derivatives of A.
Complex theta1(const KernelCouplings& k, Complex V, const KernelNode& n1, const KernelNode& n2);
Complex theta1(const KernelCouplings& k, Complex V, Complex z1, Complex z2);
/// Same derivative by nested trapezoidal rules on circles of radius
/// min(|Im z|, 0.2) / 2 around z1 and z2.
Complex theta1_cauchy(const KernelCouplings& k, Complex V, Complex z1, Complex z2, int nodes = 32);

Complex theta2(const KernelCouplings& k, const KernelNode& n1, const KernelNode& n2);
Complex theta2(const KernelCouplings& k, Complex z1, Complex z2);
/// (1/n) sum_i d/dz1[z1 T(z1)]_ii d/dz2[z2 T(z2)]_ii with the derivatives
/// taken numerically on circles, from the diagonal of T in the canonical basis.
Complex theta2_alternate(const PopulationModel& model, Complex z1, Complex z2, int nodes = 32);

CovarianceKernel theta_total(const KernelCouplings& k, const MomentProfile& profile, Complex z1,
                             Complex z2, Diagnostics* diag = nullptr);
/// Theta_0 taken in its stable A0 form; used by the quadrature layers.
CovarianceKernel theta_total(const KernelCouplings& k, const MomentProfile& profile,
                             const KernelNode& n1, const KernelNode& n2);

BiasValue bias(const KernelCouplings& k, const MomentProfile& profile, const KernelNode& node);
BiasValue bias(const KernelCouplings& k, const MomentProfile& profile, Complex z);

struct LimitObjects {
  Complex theta1;
  Complex theta2;
  Complex B1;
  Complex B2;
};

/// Theta_1, Theta_2, B_1, B_2 of a diagonal population whose spectral measure
/// converges to `mass` on atoms `value`, at ratio c.
LimitObjects diag_limit_objects(const VectorXd& value, const VectorXd& mass, double c, Complex V,
                                Complex z1, Complex z2, Complex z);

/// Direct N x N evaluation of the trace formulas. Cubic in N; meant as an
/// independent check of the atom-compressed kernels.
namespace dense {
Complex a_kernel(const PopulationModel& model, Complex z1, Complex z2);
Complex a0_kernel(const PopulationModel& model, Complex z1, Complex z2);
Complex theta2(const PopulationModel& model, Complex z1, Complex z2);
BiasValue bias(const PopulationModel& model, const MomentProfile& profile, Complex z);
}  // namespace dense

}  // namespace covclt::clt
