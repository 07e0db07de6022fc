#include "covclt/clt.hpp"

#include <cmath>
#include <sstream>

namespace covclt::clt {

void MomentProfile::validate() const {
  if (std::abs(V) > 1.0 + 1e-12) throw std::invalid_argument("|V| must not exceed 1");
  if (kappa < -1.0 - v2() - 1e-12) throw std::invalid_argument("kappa must be >= -1 - |V|^2");
}

KernelCouplings KernelCouplings::from_model(const PopulationModel& model) {
  KernelCouplings k;
  k.atoms = deteq::WeightedAtoms::from_model(model);
  const SpectralAtoms& a = model.atoms();
  const double n = static_cast<double>(model.n());
  k.transpose_coupling = a.transpose_overlap / n;
  k.diagonal_coupling = a.diagonal_overlap / n;
  k.diagonal = model.is_diagonal();
  k.transpose_diagonal = model.is_diagonal() || model.is_real();
  return k;
}

KernelCouplings KernelCouplings::from_measure(VectorXd value, const VectorXd& mass, double c) {
  KernelCouplings k;
  k.atoms = deteq::WeightedAtoms::from_measure(std::move(value), mass, c);
  k.transpose_coupling = k.atoms.weight.asDiagonal();
  k.diagonal_coupling = k.atoms.weight.asDiagonal();
  k.diagonal = true;
  k.transpose_diagonal = true;
  return k;
}

KernelNode KernelNode::conj() const {
  KernelNode c;
  c.z = std::conj(z);
  c.t_tilde = std::conj(t_tilde);
  c.dt_tilde = std::conj(dt_tilde);
  c.e = e.conjugate();
  c.h = h.conjugate();
  c.dh = dh.conjugate();
  return c;
}

KernelNode make_node(const KernelCouplings& k, const deteq::StieltjesState& state) {
  KernelNode node;
  node.z = state.z;
  node.t_tilde = state.t_tilde;
  node.dt_tilde = deteq::t_tilde_derivative(k.atoms, state);
  const VectorXd& lam = k.atoms.value;
  const Index K = lam.size();
  node.e.resize(K);
  node.h.resize(K);
  node.dh.resize(K);
  for (Index a = 0; a < K; ++a) {
    const Complex e = 1.0 / (1.0 + node.t_tilde * lam(a));
    node.e(a) = e;
    node.h(a) = node.t_tilde * lam(a) * e;
    node.dh(a) = node.dt_tilde * lam(a) * e * e;
  }
  return node;
}

KernelNode make_node(const KernelCouplings& k, Complex z, const deteq::SolverOptions& opts) {
  return make_node(k, deteq::solve_canonical(k.atoms, z, opts));
}

namespace {

Complex weighted_dot(const VectorXd& w, const VectorXcd& a, const VectorXcd& b) {
  Complex s = 0.0;
  for (Index i = 0; i < w.size(); ++i) s += w(i) * a(i) * b(i);
  return s;
}

Complex coupled(const KernelCouplings& k, bool diagonal, const MatrixXd& m, const VectorXcd& a,
                const VectorXcd& b) {
  if (diagonal) return weighted_dot(k.atoms.weight, a, b);
  return a.transpose() * (m * b);
}

struct ADerivs {
  Complex A, A1, A2, A12;
};

ADerivs a0_derivs(const KernelCouplings& k, const KernelNode& n1, const KernelNode& n2) {
  const VectorXd& w = k.atoms.weight;
  return {weighted_dot(w, n1.h, n2.h), weighted_dot(w, n1.dh, n2.h), weighted_dot(w, n1.h, n2.dh),
          weighted_dot(w, n1.dh, n2.dh)};
}

ADerivs a_derivs(const KernelCouplings& k, const KernelNode& n1, const KernelNode& n2) {
  if (k.transpose_diagonal) return a0_derivs(k, n1, n2);
  const MatrixXd& p = k.transpose_coupling;
  const VectorXcd ph = p * n2.h;
  const VectorXcd pdh = p * n2.dh;
  return {n1.h.transpose() * ph, n1.dh.transpose() * ph, n1.h.transpose() * pdh,
          n1.dh.transpose() * pdh};
}

// d/dz2 { A1 / (1 - v A) }
Complex log_kernel_mixed(const ADerivs& d, double v) {
  const Complex one_minus = 1.0 - v * d.A;
  if (std::abs(one_minus) < 1e-10) {
    throw NumericalError("1 - |V|^2 A vanishes: points on the support");
  }
  return d.A12 / one_minus + v * d.A1 * d.A2 / (one_minus * one_minus);
}

double dist_to_positive_axis(Complex z) {
  return z.real() >= 0.0 ? std::abs(z.imag()) : std::abs(z);
}

double cauchy_radius(Complex z) { return 0.5 * std::min(dist_to_positive_axis(z), 0.2); }

}  // namespace

AKernel a_kernel(const KernelCouplings& k, const KernelNode& n1, const KernelNode& n2) {
  AKernel out;
  out.A0 = weighted_dot(k.atoms.weight, n1.h, n2.h);
  out.A = k.transpose_diagonal ? out.A0 : coupled(k, false, k.transpose_coupling, n1.h, n2.h);
  if (n1.z != n2.z && n1.t_tilde != n2.t_tilde) {
    const Complex closed =
        (n1.z - n2.z) * n1.t_tilde * n2.t_tilde / (n1.t_tilde - n2.t_tilde);
    out.identity_defect = std::abs((1.0 - out.A0) - closed) / std::max(1e-300, std::abs(1.0 - out.A0));
  }
  return out;
}

Complex theta0(const KernelNode& n1, const KernelNode& n2) {
  const Complex dt = n1.t_tilde - n2.t_tilde;
  const Complex dz = n1.z - n2.z;
  return n1.dt_tilde * n2.dt_tilde / (dt * dt) - 1.0 / (dz * dz);
}

Complex theta0(const KernelCouplings& k, Complex z1, Complex z2, Diagnostics* diag) {
  if (z1 == z2) {
    const double s = z2.imag() < 0.0 ? -1.0 : 1.0;
    const Complex moved = z2 + Complex(0.0, 1e-5 * s);
    warn(diag, "theta0 at coincident points " + to_string(z1) + "; z2 moved to " + to_string(moved));
    // The difference quotient has lost all digits at this separation.
    return theta0_alternate(k, make_node(k, z1), make_node(k, moved));
  }
  return theta0(make_node(k, z1), make_node(k, z2));
}

Complex theta0_alternate(const KernelCouplings& k, const KernelNode& n1, const KernelNode& n2) {
  return log_kernel_mixed(a0_derivs(k, n1, n2), 1.0);
}

Complex theta1(const KernelCouplings& k, Complex V, const KernelNode& n1, const KernelNode& n2) {
  return log_kernel_mixed(a_derivs(k, n1, n2), std::norm(V));
}

Complex theta1(const KernelCouplings& k, Complex V, Complex z1, Complex z2) {
  return theta1(k, V, make_node(k, z1), make_node(k, z2));
}

Complex theta1_cauchy(const KernelCouplings& k, Complex V, Complex z1, Complex z2, int nodes) {
  const double v = std::norm(V);
  const double r1 = cauchy_radius(z1);
  const double r2 = cauchy_radius(z2);
  if (!(r1 > 0.0 && r2 > 0.0)) throw std::invalid_argument("theta1_cauchy needs points off [0, inf)");

  auto a_only = [&](const KernelNode& a, const KernelNode& b) {
    return k.transpose_diagonal ? weighted_dot(k.atoms.weight, a.h, b.h)
                                : Complex(a.h.transpose() * (k.transpose_coupling * b.h));
  };
  const KernelNode c1 = make_node(k, z1);
  const KernelNode c2 = make_node(k, z2);
  std::vector<KernelNode> ring1;
  std::vector<Complex> w(static_cast<size_t>(nodes));
  ring1.reserve(static_cast<size_t>(nodes));
  deteq::SolverOptions o1;
  o1.warm_start = c1.t_tilde;
  deteq::SolverOptions o2;
  o2.warm_start = c2.t_tilde;
  for (int j = 0; j < nodes; ++j) {
    w[static_cast<size_t>(j)] = std::polar(1.0, 2.0 * kPi * j / nodes);
    ring1.push_back(make_node(k, z1 + r1 * w[static_cast<size_t>(j)], o1));
  }
  Complex outer = 0.0;
  for (int j = 0; j < nodes; ++j) {
    const Complex wj = w[static_cast<size_t>(j)];
    const KernelNode b = make_node(k, z2 + r2 * wj, o2);
    Complex d1 = 0.0;
    for (int i = 0; i < nodes; ++i) d1 += a_only(ring1[static_cast<size_t>(i)], b) / w[static_cast<size_t>(i)];
    d1 /= static_cast<double>(nodes) * r1;
    const Complex a = a_only(c1, b);
    outer += d1 / (1.0 - v * a) / wj;
  }
  return outer / (static_cast<double>(nodes) * r2);
}

Complex theta2(const KernelCouplings& k, const KernelNode& n1, const KernelNode& n2) {
  return coupled(k, k.diagonal, k.diagonal_coupling, n1.dh, n2.dh);
}

Complex theta2(const KernelCouplings& k, Complex z1, Complex z2) {
  return theta2(k, make_node(k, z1), make_node(k, z2));
}

namespace {

// d/dz [z T(z)]_ii for all i, by the trapezoidal rule on a circle.
VectorXcd diag_zt_derivative(const PopulationModel& model, const MatrixXd& abs2, Complex z,
                             int nodes) {
  const double r = cauchy_radius(z);
  if (!(r > 0.0)) throw std::invalid_argument("derivative needs a point off [0, inf)");
  const VectorXd& lam = model.eigenvalues();
  const auto atoms = deteq::WeightedAtoms::from_model(model);
  deteq::SolverOptions opts;
  opts.warm_start = deteq::solve_canonical(atoms, z).t_tilde;
  VectorXcd acc = VectorXcd::Zero(model.N());
  VectorXcd e(model.N());
  for (int j = 0; j < nodes; ++j) {
    const Complex w = std::polar(1.0, 2.0 * kPi * j / nodes);
    const Complex tt = deteq::solve_canonical(atoms, z + r * w, opts).t_tilde;
    for (Index i = 0; i < model.N(); ++i) e(i) = -1.0 / (1.0 + tt * lam(i));
    if (model.is_diagonal()) {
      acc += e / w;
    } else {
      acc += (abs2 * e) / w;
    }
  }
  return acc / (static_cast<double>(nodes) * r);
}

}  // namespace

Complex theta2_alternate(const PopulationModel& model, Complex z1, Complex z2, int nodes) {
  MatrixXd abs2;
  if (!model.is_diagonal()) abs2 = model.eigenvectors().cwiseAbs2();
  const VectorXcd d1 = diag_zt_derivative(model, abs2, z1, nodes);
  const VectorXcd d2 = diag_zt_derivative(model, abs2, z2, nodes);
  return (d1.array() * d2.array()).sum() / static_cast<double>(model.n());
}

CovarianceKernel theta_total(const KernelCouplings& k, const MomentProfile& profile,
                             const KernelNode& n1, const KernelNode& n2) {
  CovarianceKernel out;
  out.z1 = n1.z;
  out.z2 = n2.z;
  const ADerivs d0 = a0_derivs(k, n1, n2);
  out.A0 = d0.A;
  out.theta0 = log_kernel_mixed(d0, 1.0);
  const double v = profile.v2();
  const ADerivs d = k.transpose_diagonal ? d0 : a_derivs(k, n1, n2);
  out.A = d.A;
  out.theta1 = v == 1.0 && k.transpose_diagonal ? out.theta0 : log_kernel_mixed(d, v);
  out.theta2 = theta2(k, n1, n2);
  out.theta = out.theta0 + v * out.theta1 + profile.kappa * out.theta2;
  return out;
}

CovarianceKernel theta_total(const KernelCouplings& k, const MomentProfile& profile, Complex z1,
                             Complex z2, Diagnostics* diag) {
  profile.validate();
  const KernelNode n1 = make_node(k, z1);
  const KernelNode n2 = make_node(k, z2);
  CovarianceKernel out = theta_total(k, profile, n1, n2);
  if (z1 != z2) {
    // The definition form is accurate away from the diagonal; keep it there.
    out.theta0 = theta0(n1, n2);
    out.theta = out.theta0 + profile.v2() * out.theta1 + profile.kappa * out.theta2;
  } else {
    warn(diag, "theta_total at coincident points " + to_string(z1) + " uses the A0 form of theta0");
  }
  return out;
}

BiasValue bias(const KernelCouplings& k, const MomentProfile& profile, const KernelNode& node) {
  const VectorXd& lam = k.atoms.value;
  const Index K = lam.size();
  VectorXcd le(K);
  VectorXcd le2(K);
  for (Index a = 0; a < K; ++a) {
    le(a) = lam(a) * node.e(a);
    le2(a) = le(a) * node.e(a);
  }
  const double v = profile.v2();
  const ADerivs d0 = a0_derivs(k, node, node);
  const Complex den0 = 1.0 - d0.A;
  const Complex a = k.transpose_diagonal ? d0.A : a_derivs(k, node, node).A;
  const Complex den1 = 1.0 - v * a;
  if (std::abs(den0) < 1e-10 || std::abs(den1) < 1e-10) {
    throw NumericalError("bias denominator vanishes at z = " + to_string(node.z) +
                         " (point on the support)");
  }
  const Complex t3 = node.t_tilde * node.t_tilde * node.t_tilde;
  BiasValue out;
  out.z = node.z;
  out.B1 = t3 * coupled(k, k.transpose_diagonal, k.transpose_coupling, le2, le) / (den0 * den1);
  out.B2 = t3 * coupled(k, k.diagonal, k.diagonal_coupling, le, le2) / den0;
  out.B = v * out.B1 + profile.kappa * out.B2;
  return out;
}

BiasValue bias(const KernelCouplings& k, const MomentProfile& profile, Complex z) {
  profile.validate();
  return bias(k, profile, make_node(k, z));
}

LimitObjects diag_limit_objects(const VectorXd& value, const VectorXd& mass, double c, Complex V,
                                Complex z1, Complex z2, Complex z) {
  const KernelCouplings k = KernelCouplings::from_measure(value, mass, c);
  const KernelNode n1 = make_node(k, z1);
  const KernelNode n2 = make_node(k, z2);
  const BiasValue b = bias(k, MomentProfile{V, 0.0}, make_node(k, z));
  return {theta1(k, V, n1, n2), theta2(k, n1, n2), b.B1, b.B2};
}

// ---------------------------------------------------------------------------

namespace dense {

namespace {

struct Point {
  deteq::StieltjesState state;
  deteq::ResolventEquivalent res;
};

Point at(const PopulationModel& model, Complex z) {
  Point p;
  p.state = deteq::solve_canonical(model, z);
  p.res = deteq::build_resolvent_equivalent(model, p.state);
  return p;
}

}  // namespace

Complex a_kernel(const PopulationModel& model, Complex z1, Complex z2) {
  const Point p1 = at(model, z1);
  const Point p2 = at(model, z2);
  const MatrixXcd s = model.sqrt_matrix();
  const MatrixXcd sb = s.conjugate();
  const Complex tr = (s * p1.res.T * s * sb * p2.res.T_transpose * sb).trace();
  return z1 * z2 / static_cast<double>(model.n()) * p1.state.t_tilde * p2.state.t_tilde * tr;
}

Complex a0_kernel(const PopulationModel& model, Complex z1, Complex z2) {
  const Point p1 = at(model, z1);
  const Point p2 = at(model, z2);
  const MatrixXcd r = model.matrix();
  const Complex tr = (r * p1.res.T * r * p2.res.T).trace();
  return z1 * z2 / static_cast<double>(model.n()) * p1.state.t_tilde * p2.state.t_tilde * tr;
}

Complex theta2(const PopulationModel& model, Complex z1, Complex z2) {
  const Point p1 = at(model, z1);
  const Point p2 = at(model, z2);
  const MatrixXcd s = model.sqrt_matrix();
  const VectorXcd d1 = (s * p1.res.T * p1.res.T * s).diagonal();
  const VectorXcd d2 = (s * p2.res.T * p2.res.T * s).diagonal();
  const Complex dt1 = deteq::t_tilde_derivative(model, p1.state);
  const Complex dt2 = deteq::t_tilde_derivative(model, p2.state);
  return z1 * z1 * z2 * z2 * dt1 * dt2 / static_cast<double>(model.n()) *
         (d1.array() * d2.array()).sum();
}

BiasValue bias(const PopulationModel& model, const MomentProfile& profile, Complex z) {
  const Point p = at(model, z);
  const MatrixXcd s = model.sqrt_matrix();
  const MatrixXcd sb = s.conjugate();
  const MatrixXcd r = model.matrix();
  const MatrixXcd& t = p.res.T;
  const MatrixXcd t2 = t * t;
  const double n = static_cast<double>(model.n());
  const Complex tt = p.state.t_tilde;
  const Complex zt2 = z * z * tt * tt;
  const Complex den0 = 1.0 - zt2 * (r * r * t2).trace() / n;
  const Complex den1 = 1.0 - profile.v2() * zt2 * (s * t * s * sb * p.res.T_transpose * sb).trace() / n;
  const Complex z3t3 = z * z * z * tt * tt * tt;
  BiasValue out;
  out.z = z;
  out.B1 = -z3t3 * (s * t2 * s * sb * p.res.T_transpose * sb).trace() / n / (den0 * den1);
  const VectorXcd d1 = (s * t * s).diagonal();
  const VectorXcd d2 = (s * t2 * s).diagonal();
  out.B2 = -z3t3 * (d1.array() * d2.array()).sum() / n / den0;
  out.B = profile.v2() * out.B1 + profile.kappa * out.B2;
  return out;
}

}  // namespace dense

}  // namespace covclt::clt
