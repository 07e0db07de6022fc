#include "covclt/hs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "covclt/parallel.hpp"
#include "covclt/quadrature.hpp"

namespace covclt::hs {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

int resolve_order(const SmoothTestFunction& f, int k, int fallback) {
  const int want = k < 0 ? fallback : k;
  return std::max(0, std::min(want, f.order()));
}

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
          v.end());
  return v;
}

// Breakpoints of f's support refined by extra points lying strictly inside it.
std::vector<double> x_breaks(const SmoothTestFunction& f, const std::vector<double>& extra) {
  std::vector<double> b = {f.lo(), f.hi()};
  for (double x : f.breakpoints()) {
    if (x > f.lo() && x < f.hi()) b.push_back(x);
  }
  for (double x : extra) {
    if (x > f.lo() && x < f.hi()) b.push_back(x);
  }
  return sorted_unique(std::move(b));
}

std::vector<double> edges_of(const std::vector<std::pair<double, double>>& intervals) {
  std::vector<double> e;
  for (const auto& [a, b] : intervals) {
    e.push_back(a);
    e.push_back(b);
  }
  return e;
}

struct PlaneNode {
  Complex z;
  double weight;
  Complex w;  // dbar Phi_k(f)(z)
};

struct PlaneGrid {
  int x_panels_per_unit;  // panels per unit length
  int y_panels;
  double grading;
};

// Tensor Gauss rule over supp f x [y_floor, y1], x-panels graded towards every
// breakpoint, y-panels graded towards y_floor.
std::vector<PlaneNode> plane_nodes(const SmoothTestFunction& f, const CutoffProfile& cutoff, int k,
                                   const std::vector<double>& breaks, double x_panel, int y_panels,
                                   double y_floor, double grading) {
  quad::Rule xr;
  for (size_t i = 1; i < breaks.size(); ++i) {
    const double len = breaks[i] - breaks[i - 1];
    const int panels = 2 * std::max(1, static_cast<int>(std::ceil(len / x_panel / 2.0)));
    xr.append(quad::two_sided_graded_panels(breaks[i - 1], breaks[i], panels, grading));
  }
  quad::Rule yr = quad::graded_panels(y_floor, cutoff.y0, y_panels, grading);
  yr.append(quad::gauss_panels(cutoff.y0, cutoff.y1, std::max(1, (y_panels + 1) / 2)));

  std::vector<PlaneNode> nodes;
  nodes.reserve(xr.size() * yr.size());
  for (size_t i = 0; i < xr.size(); ++i) {
    for (size_t j = 0; j < yr.size(); ++j) {
      const Complex z(xr.x[i], yr.x[j]);
      const Complex w = extension_dbar(f, cutoff, z, k);
      if (w == Complex(0.0, 0.0)) continue;
      nodes.push_back({z, xr.w[i] * yr.w[j], w});
    }
  }
  return nodes;
}

}  // namespace

// ---------------------------------------------------------------------------

void CutoffProfile::validate() const {
  if (!(y0 > 0.0 && y1 > y0)) throw std::invalid_argument("cutoff needs 0 < y0 < y1");
}

double CutoffProfile::chi(double y) const {
  const double a = std::abs(y);
  if (a <= y0) return 1.0;
  if (a >= y1) return 0.0;
  const double s = (a - y0) / (y1 - y0);
  return std::exp(1.0 - 1.0 / (1.0 - s * s));
}

double CutoffProfile::dchi(double y) const {
  const double a = std::abs(y);
  if (a <= y0 || a >= y1) return 0.0;
  const double s = (a - y0) / (y1 - y0);
  const double q = 1.0 - s * s;
  const double d = chi(a) * (-2.0 * s / (q * q)) / (y1 - y0);
  return y < 0.0 ? -d : d;
}

Complex extension_dbar(const SmoothTestFunction& f, const CutoffProfile& cutoff, Complex z, int k) {
  const int kk = resolve_order(f, k, 2);
  const double x = z.real();
  const double y = z.imag();
  if (x <= f.lo() || x >= f.hi()) return 0.0;
  double d[64];
  f.derivatives(x, kk + 1, d);
  const Complex iy(0.0, y);
  const double chi = cutoff.chi(y);
  const double dchi = cutoff.dchi(y);
  Complex acc = 0.0;
  if (dchi != 0.0) {
    Complex p = 1.0;
    for (int l = 0; l <= kk; ++l) {
      acc += p * d[l] / factorial(l);
      p *= iy;
    }
    acc *= Complex(0.0, dchi);
  }
  if (chi != 0.0) acc += std::pow(iy, kk) * d[kk + 1] * chi / factorial(kk);
  return acc;
}

Complex extension(const SmoothTestFunction& f, const CutoffProfile& cutoff, Complex z, int k) {
  const int kk = resolve_order(f, k, 2);
  const double x = z.real();
  if (x <= f.lo() || x >= f.hi()) return 0.0;
  double d[64];
  f.derivatives(x, kk, d);
  const Complex iy(0.0, z.imag());
  Complex acc = 0.0;
  Complex p = 1.0;
  for (int l = 0; l <= kk; ++l) {
    acc += p * d[l] / factorial(l);
    p *= iy;
  }
  return acc * cutoff.chi(z.imag());
}

TraceIdentityResult hs_trace_identity_check(const MatrixXcd& a, const SmoothTestFunction& f,
                                            const CutoffProfile& cutoff, int k) {
  cutoff.validate();
  if (a.rows() != a.cols()) throw std::invalid_argument("A must be square");
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(a, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("eigenvalues of A failed");
  const VectorXd lam = es.eigenvalues();
  TraceIdentityResult out;
  for (Index i = 0; i < lam.size(); ++i) out.exact += f(lam(i));

  const int kk = resolve_order(f, k, 2);
  const std::vector<double> breaks =
      x_breaks(f, std::vector<double>(lam.data(), lam.data() + lam.size()));
  double prev = kNaN;
  for (int level = 0; level < 3; ++level) {
    const double scale = std::pow(2.0, level);
    const auto nodes = plane_nodes(f, cutoff, kk, breaks, 0.5 / scale,
                                   static_cast<int>(4 * scale), 0.0, 3.0);
    std::vector<double> terms(nodes.size());
    for (size_t i = 0; i < nodes.size(); ++i) {
      Complex tr = 0.0;
      for (Index j = 0; j < lam.size(); ++j) tr += 1.0 / (lam(j) - nodes[i].z);
      terms[i] = nodes[i].weight * (nodes[i].w * tr).real();
    }
    const double value = quad::compensated_sum(terms) / kPi;
    if (level > 0) out.truncation_estimate = std::abs(value - prev);
    prev = value;
    out.hs_value = value;
  }
  out.deviation = std::abs(out.hs_value - out.exact);
  return out;
}

std::vector<std::pair<double, double>> support_intervals(const deteq::WeightedAtoms& atoms) {
  if (atoms.lambda_max() <= 0.0) return {};
  return deteq::density_and_support(atoms, deteq::default_support_grid(atoms)).support_intervals;
}

namespace {

double boundary_t_tilde_imag_safe(const deteq::WeightedAtoms& atoms, double x, Complex* tt) {
  const deteq::BoundaryValue bv = deteq::boundary_value(atoms, x);
  if (tt != nullptr) *tt = bv.t_tilde;
  return bv.t_tilde.imag();
}

// Tanh-sinh over [a, b] that drops points closer than `guard` to an endpoint.
double ts_integrate(const std::function<double(double)>& g, double a, double b, double tol) {
  if (!(b > a)) return 0.0;
  const double guard = 1e-14 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
  return quad::integrate_endpoint_singular(
      [&](double x, double xc) {
        if (std::abs(xc) < guard) return 0.0;
        return g(x);
      },
      a, b, tol);
}

// Composite Gauss in theta with x = mid - half cos(theta) on a support
// interval [a, b]; square-root edge behaviour becomes smooth in theta.
// Panels double until the relative change drops below tol.
struct ThetaMap {
  double mid;
  double half;
  ThetaMap(double a, double b) : mid(0.5 * (a + b)), half(0.5 * (b - a)) {}
  double x(double th) const { return mid - half * std::cos(th); }
  double jac(double th) const { return half * std::sin(th); }
  double theta(double x) const { return std::acos(std::clamp((mid - x) / half, -1.0, 1.0)); }
};

double theta_integrate(const std::function<double(double)>& g, double a, double b,
                       const std::vector<double>& x_breaks_in, double tol) {
  if (!(b > a)) return 0.0;
  const ThetaMap map(a, b);
  std::vector<double> tb = {0.0, kPi};
  for (double x : x_breaks_in) {
    if (x > a && x < b) tb.push_back(map.theta(x));
  }
  tb = sorted_unique(tb);
  double prev = kNaN;
  for (int panels = 2; panels <= 512; panels *= 2) {
    std::vector<double> terms;
    for (size_t s = 1; s < tb.size(); ++s) {
      const quad::Rule r = quad::gauss_panels(tb[s - 1], tb[s], panels);
      for (size_t i = 0; i < r.size(); ++i) terms.push_back(r.w[i] * map.jac(r.x[i]) * g(map.x(r.x[i])));
    }
    const double val = quad::compensated_sum(terms);
    if (std::abs(val - prev) <= tol * std::max(1.0, std::abs(val))) return val;
    prev = val;
  }
  return prev;
}

}  // namespace

double ls_mean(const PopulationModel& model, const SmoothTestFunction& f, Diagnostics* diag) {
  const auto atoms = deteq::WeightedAtoms::from_model(model);
  const auto intervals = support_intervals(atoms);
  const double c = atoms.c;
  double total = 0.0;
  for (const auto& [a, b] : intervals) {
    if (f.lo() > a || f.hi() < b) {
      warn(diag, "test function support does not cover the spectral support; the mean is that of the windowed function");
    }
    std::vector<double> breaks = {f.lo(), f.hi()};
    breaks.insert(breaks.end(), f.breakpoints().begin(), f.breakpoints().end());
    total += theta_integrate(
        [&](double x) {
          const double fx = f(x);
          if (fx == 0.0) return 0.0;
          return fx * boundary_t_tilde_imag_safe(atoms, x, nullptr) / (c * kPi);
        },
        a, b, breaks, 1e-11);
  }
  const double atom = model.atom_at_zero();
  if (atom > 0.0) total += atom * f(0.0);
  return static_cast<double>(model.N()) * total;
}

// ---------------------------------------------------------------------------

namespace {

// Node data for the pair sums: h and dh premultiplied by the couplings.
struct PairNode {
  Complex z;
  double weight;
  Complex w;
  VectorXcd h;
  VectorXcd dh;
  VectorXcd wh;   // diag(weight) h
  VectorXcd wdh;  // diag(weight) dh
  VectorXcd ph;   // transpose coupling h (only when not diagonal)
  VectorXcd pdh;
};

std::vector<PairNode> pair_nodes(const clt::KernelCouplings& k, const std::vector<PlaneNode>& plane,
                                 int threads) {
  std::vector<PairNode> out(plane.size());
  parallel_for(plane.size(), threads, [&](size_t i) {
    const clt::KernelNode n = clt::make_node(k, plane[i].z);
    PairNode& p = out[i];
    p.z = plane[i].z;
    p.weight = plane[i].weight;
    p.w = plane[i].w;
    p.h = n.h;
    p.dh = n.dh;
    p.wh = k.atoms.weight.cwiseProduct(n.h);
    p.wdh = k.atoms.weight.cwiseProduct(n.dh);
    if (!k.transpose_diagonal) {
      p.ph = k.transpose_coupling * n.h;
      p.pdh = k.transpose_coupling * n.dh;
    }
  });
  return out;
}

inline Complex mixed(Complex A, Complex A1, Complex A2, Complex A12, double v) {
  const Complex q = 1.0 / (1.0 - v * A);
  return q * (A12 + v * A1 * A2 * q);
}

struct PairSums {
  double i0 = 0.0;
  double i1 = 0.0;
  double i2 = 0.0;
};

PairSums pair_sums(const clt::KernelCouplings& k, double v, const std::vector<PairNode>& fn,
                   const std::vector<PairNode>& gn, int threads) {
  const bool need_i1 = v != 0.0 && !(k.transpose_diagonal && v == 1.0);
  std::vector<double> row0(fn.size(), 0.0);
  std::vector<double> row1(fn.size(), 0.0);
  parallel_for(fn.size(), threads, [&](size_t i) {
    const PairNode& a = fn[i];
    const Index K = a.h.size();
    double s0 = 0.0;
    double s1 = 0.0;
    for (const PairNode& b : gn) {
      Complex A = 0.0, A1 = 0.0, A2 = 0.0, A12 = 0.0;
      Complex C = 0.0, C1 = 0.0, C2 = 0.0, C12 = 0.0;  // partner conjugated
      for (Index m = 0; m < K; ++m) {
        const Complex bh = b.wh(m);
        const Complex bdh = b.wdh(m);
        A += a.h(m) * bh;
        A1 += a.dh(m) * bh;
        A2 += a.h(m) * bdh;
        A12 += a.dh(m) * bdh;
        C += a.h(m) * std::conj(bh);
        C1 += a.dh(m) * std::conj(bh);
        C2 += a.h(m) * std::conj(bdh);
        C12 += a.dh(m) * std::conj(bdh);
      }
      const Complex same = a.w * b.w;
      const Complex cross = a.w * std::conj(b.w);
      const double wt = a.weight * b.weight;
      s0 += wt * ((same * mixed(A, A1, A2, A12, 1.0)).real() + (cross * mixed(C, C1, C2, C12, 1.0)).real());
      if (need_i1) {
        const Complex P = a.h.transpose() * b.ph;
        const Complex P1 = a.dh.transpose() * b.ph;
        const Complex P2 = a.h.transpose() * b.pdh;
        const Complex P12 = a.dh.transpose() * b.pdh;
        const Complex Q = a.h.transpose() * b.ph.conjugate();
        const Complex Q1 = a.dh.transpose() * b.ph.conjugate();
        const Complex Q2 = a.h.transpose() * b.pdh.conjugate();
        const Complex Q12 = a.dh.transpose() * b.pdh.conjugate();
        s1 += wt * ((same * mixed(P, P1, P2, P12, v)).real() + (cross * mixed(Q, Q1, Q2, Q12, v)).real());
      }
    }
    row0[i] = s0;
    row1[i] = s1;
  });
  PairSums out;
  const double norm = 1.0 / (2.0 * kPi * kPi);
  out.i0 = norm * quad::compensated_sum(row0);
  out.i1 = need_i1 ? norm * quad::compensated_sum(row1) : (v == 0.0 ? 0.0 : out.i0);

  // Theta_2 factorizes: sum_ij w_i w_j dh_i^T G dh_j.
  const Index K = k.size();
  VectorXcd uf = VectorXcd::Zero(K);
  VectorXcd ug = VectorXcd::Zero(K);
  for (const PairNode& a : fn) uf += (a.weight * a.w) * a.dh;
  for (const PairNode& b : gn) ug += (b.weight * b.w) * b.dh;
  const VectorXcd gug = k.diagonal ? VectorXcd(k.atoms.weight.cwiseProduct(ug))
                                   : VectorXcd(k.diagonal_coupling * ug);
  const VectorXcd gugc = k.diagonal ? VectorXcd(k.atoms.weight.cwiseProduct(ug.conjugate()))
                                    : VectorXcd(k.diagonal_coupling * ug.conjugate());
  out.i2 = norm * (Complex(uf.transpose() * gug) + Complex(uf.transpose() * gugc)).real();
  return out;
}

}  // namespace

CovarianceParts clt_covariance_hs(const clt::KernelCouplings& k, const clt::MomentProfile& profile,
                                  const SmoothTestFunction& f, const SmoothTestFunction& g,
                                  const HSOptions& opts) {
  profile.validate();
  opts.cutoff.validate();
  const int kf = resolve_order(f, opts.k, 2);
  const int kg = resolve_order(g, opts.k, 2);
  if (kf < 2 || kg < 2) throw std::invalid_argument("planar covariance needs test functions of order >= 2");
  const auto edges = edges_of(support_intervals(k.atoms));
  const auto bf = x_breaks(f, edges);
  const auto bg = x_breaks(g, edges);
  const double v = profile.v2();

  CovarianceParts out;
  out.A = std::max({1.01 * k.atoms.support_bound(), f.hi(), g.hi()});
  double prev = kNaN;
  double prev_scale = 0.0;
  for (int level = 0; level < opts.max_levels; ++level) {
    const double grow = std::pow(1.5, level);
    const double xp = opts.x_panel / grow;
    const int yp = static_cast<int>(std::ceil(opts.y_panels * grow));
    const auto fp = pair_nodes(k, plane_nodes(f, opts.cutoff, kf, bf, xp, yp, opts.y_floor, 2.0), opts.threads);
    const auto gp = pair_nodes(k, plane_nodes(g, opts.cutoff, kg, bg, xp, yp, opts.y_floor, 2.0), opts.threads);
    const PairSums s = pair_sums(k, v, fp, gp, opts.threads);
    out.I0 = s.i0;
    out.I1 = s.i1;
    out.I2 = s.i2;
    out.value = s.i0 + v * s.i1 + profile.kappa * s.i2;
    out.levels = level + 1;
    const double scale = std::max({std::abs(s.i0), std::abs(v * s.i1), std::abs(profile.kappa * s.i2)});
    if (level > 0) {
      out.rel_change = std::abs(out.value - prev) / std::max({scale, prev_scale, 1e-300});
      if (out.rel_change < opts.rel_tol) return out;
    }
    prev = out.value;
    prev_scale = scale;
  }
  std::ostringstream os;
  os.precision(10);
  os << "planar covariance did not settle: last two estimates " << prev << " and " << out.value
     << " (relative change " << out.rel_change << ")";
  throw NumericalError(os.str());
}

CovarianceParts clt_covariance_hs(const PopulationModel& model, const clt::MomentProfile& profile,
                                  const SmoothTestFunction& f, const SmoothTestFunction& g,
                                  const HSOptions& opts) {
  return clt_covariance_hs(clt::KernelCouplings::from_model(model), profile, f, g, opts);
}

// ---------------------------------------------------------------------------

namespace {

// Intersection of [a, b] with the support of a test function.
std::pair<double, double> clip(double a, double b, const SmoothTestFunction& f) {
  return {std::max(a, f.lo()), std::min(b, f.hi())};
}

// Fbar_a = \int_S f'(x) Im(-1/(1 + t~(x) lambda_a)) dx for every atom, by
// Gauss panels in theta with x = mid - half cos(theta) on each interval.
VectorXd cumulant_projection(const deteq::WeightedAtoms& atoms,
                             const std::vector<std::pair<double, double>>& intervals,
                             const SmoothTestFunction& f, double tol) {
  const Index K = atoms.value.size();
  VectorXd total = VectorXd::Zero(K);
  for (const auto& [a, b] : intervals) {
    const auto [lo, hi] = clip(a, b, f);
    if (!(hi > lo)) continue;
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    auto theta_of = [&](double x) { return std::acos(std::clamp((mid - x) / half, -1.0, 1.0)); };
    std::vector<double> tb = {theta_of(lo), theta_of(hi)};
    for (double x : f.breakpoints()) {
      if (x > lo && x < hi) tb.push_back(theta_of(x));
    }
    tb = sorted_unique(tb);
    VectorXd prev = VectorXd::Constant(K, kNaN);
    for (int panels = 8; panels <= 2048; panels *= 2) {
      VectorXd acc = VectorXd::Zero(K);
      for (size_t s = 1; s < tb.size(); ++s) {
        const quad::Rule r = quad::gauss_panels(tb[s - 1], tb[s], panels);
        for (size_t i = 0; i < r.size(); ++i) {
          const double x = mid - half * std::cos(r.x[i]);
          const double jac = half * std::sin(r.x[i]);
          const double fp = f.derivative(1, x);
          if (fp == 0.0) continue;
          const Complex tt = deteq::boundary_value(atoms, x).t_tilde;
          for (Index m = 0; m < K; ++m) {
            acc(m) += r.w[i] * jac * fp * (-1.0 / (1.0 + tt * atoms.value(m))).imag();
          }
        }
      }
      const double diff = (acc - prev).cwiseAbs().maxCoeff();
      prev = acc;
      if (diff <= tol * std::max(1.0, acc.cwiseAbs().maxCoeff())) break;
    }
    total += prev;
  }
  return total;
}

// Nodes packed against a support edge can round to the same x; their
// weight is negligible and the kernel is taken as 0 there.
double log_kernel(Complex tx, Complex ty) {
  if (tx == ty) return 0.0;
  return std::log(std::abs((tx - std::conj(ty)) / (tx - ty)));
}

}  // namespace

BoundaryCovariance clt_covariance_boundary(const clt::KernelCouplings& k,
                                           const clt::MomentProfile& profile,
                                           const SmoothTestFunction& f, const SmoothTestFunction& g,
                                           double tol) {
  profile.validate();
  const double v = profile.v2();
  if (std::abs(v) > 1e-12 && std::abs(v - 1.0) > 1e-12) {
    throw std::invalid_argument("boundary covariance needs |V| in {0, 1}");
  }
  if (!k.transpose_diagonal) throw std::invalid_argument("boundary covariance needs a real population");
  const auto& atoms = k.atoms;
  const auto intervals = support_intervals(atoms);

  auto tt_at = [&](double x) { return deteq::boundary_value(atoms, x).t_tilde; };

  // Theta-panel edges of [a, b] clipped to supp h, with h's breakpoints.
  auto theta_edges = [](const ThetaMap& map, double lo, double hi, const SmoothTestFunction& h) {
    std::vector<double> e = {map.theta(lo), map.theta(hi)};
    for (double x : h.breakpoints()) {
      if (x > lo && x < hi) e.push_back(map.theta(x));
    }
    return sorted_unique(e);
  };

  // \iint f'(x) g'(y) L(x, y) over one pair of support intervals; the inner
  // panels are graded towards y = x where L has its log singularity.
  auto log_block = [&](std::pair<double, double> ia, std::pair<double, double> ib, bool same, int panels) {
    const auto [flo, fhi] = clip(ia.first, ia.second, f);
    const auto [glo, ghi] = clip(ib.first, ib.second, g);
    if (!(fhi > flo) || !(ghi > glo)) return 0.0;
    const ThetaMap mx(ia.first, ia.second);
    const ThetaMap my(ib.first, ib.second);
    // Inner segments away from y = x are shared by all rows.
    std::unordered_map<double, Complex> inner_cache;
    auto tt_inner = [&](double th) {
      const auto it = inner_cache.find(th);
      if (it != inner_cache.end()) return it->second;
      const Complex v = tt_at(my.x(th));
      inner_cache.emplace(th, v);
      return v;
    };
    const auto ex = theta_edges(mx, flo, fhi, f);
    const auto ey = theta_edges(my, glo, ghi, g);
    // Near a support edge t~ ~ a + i b theta, so L(x, y) also carries
    // log|theta_x + theta_y|; panels are graded towards theta = 0 and pi.
    auto segment = [panels](double a, double b, bool grade_a, bool grade_b) {
      const int layers = 4 + 3 * static_cast<int>(std::lround(std::log2(panels)));
      const double h = (b - a) / panels;
      quad::Rule r;
      double lo = a, hi = b;
      if (grade_a) {
        r.append(quad::geometric_panels(a, a + h, layers));
        lo = a + h;
      }
      if (grade_b) {
        r.append(quad::geometric_panels(b, b - h, layers));
        hi = b - h;
      }
      r.append(quad::gauss_panels(lo, hi, std::max(1, panels - int(grade_a) - int(grade_b))));
      return r;
    };
    auto at_edge = [](double th) { return th == 0.0 || th == kPi; };
    quad::Rule outer;
    for (size_t s = 1; s < ex.size(); ++s) outer.append(segment(ex[s - 1], ex[s], at_edge(ex[s - 1]), at_edge(ex[s])));
    std::vector<double> rows(outer.size(), 0.0);
    for (size_t i = 0; i < outer.size(); ++i) {
      const double x = mx.x(outer.x[i]);
      const double fp = f.derivative(1, x);
      if (fp == 0.0) continue;
      const Complex tx = tt_at(x);
      std::vector<double> cuts = ey;
      const bool inside = same && x > glo && x < ghi;
      const double tx_theta = my.theta(x);
      if (inside) {
        cuts.push_back(tx_theta);
        cuts = sorted_unique(cuts);
      }
      quad::Rule inner;
      for (size_t s = 1; s < cuts.size(); ++s) {
        const bool ga = at_edge(cuts[s - 1]) || (inside && cuts[s - 1] == tx_theta);
        const bool gb = at_edge(cuts[s]) || (inside && cuts[s] == tx_theta);
        inner.append(segment(cuts[s - 1], cuts[s], ga, gb));
      }
      double acc = 0.0;
      for (size_t j = 0; j < inner.size(); ++j) {
        const double y = my.x(inner.x[j]);
        const double gp = g.derivative(1, y);
        if (gp == 0.0 || y == x) continue;
        acc += inner.w[j] * my.jac(inner.x[j]) * gp * log_kernel(tx, tt_inner(inner.x[j]));
      }
      rows[i] = outer.w[i] * mx.jac(outer.x[i]) * fp * acc;
    }
    return quad::compensated_sum(rows);
  };

  BoundaryCovariance out;
  double prev = kNaN;
  for (int panels = 2;; panels *= 2) {
    double total = 0.0;
    for (size_t a = 0; a < intervals.size(); ++a) {
      for (size_t b = 0; b < intervals.size(); ++b) total += log_block(intervals[a], intervals[b], a == b, panels);
    }
    out.log_term = total;
    if (std::abs(total - prev) <= tol * std::max(1e-300, std::abs(total))) break;
    if (panels >= 256) {
      std::ostringstream os;
      os.precision(10);
      os << "boundary covariance log term did not settle: " << prev << " and " << total;
      throw NumericalError(os.str());
    }
    prev = total;
  }
  if (profile.kappa != 0.0) {
    const VectorXd ff = cumulant_projection(atoms, intervals, f, tol);
    const VectorXd gg = &f == &g ? ff : cumulant_projection(atoms, intervals, g, tol);
    out.cumulant_term = k.diagonal ? ff.dot(atoms.weight.cwiseProduct(gg)) : ff.dot(k.diagonal_coupling * gg);
  }
  out.value = (1.0 + v) / (2.0 * kPi * kPi) * out.log_term + profile.kappa / (kPi * kPi) * out.cumulant_term;
  return out;
}

BoundaryCovariance clt_covariance_boundary(const PopulationModel& model,
                                           const clt::MomentProfile& profile,
                                           const SmoothTestFunction& f, const SmoothTestFunction& g,
                                           double tol) {
  return clt_covariance_boundary(clt::KernelCouplings::from_model(model), profile, f, g, tol);
}

std::pair<double, double> mp_cumulant_equality(double c, const SmoothTestFunction& f,
                                               const SmoothTestFunction& g) {
  if (!(c > 0.0)) throw std::invalid_argument("c must be positive");
  const auto atoms = deteq::WeightedAtoms::from_measure(VectorXd::Ones(1), VectorXd::Ones(1), c);
  const double sc = std::sqrt(c);
  const double lm = (1.0 - sc) * (1.0 - sc);
  const double lp = (1.0 + sc) * (1.0 + sc);

  auto lhs_factor = [&](const SmoothTestFunction& h) {
    std::vector<double> b = {lm, lp};
    for (double x : {h.lo(), h.hi()}) {
      if (x > lm && x < lp) b.push_back(x);
    }
    for (double x : h.breakpoints()) {
      if (x > lm && x < lp) b.push_back(x);
    }
    b = sorted_unique(b);
    double s = 0.0;
    for (size_t i = 1; i < b.size(); ++i) {
      s += ts_integrate(
          [&](double x) {
            const double hp = h.derivative(1, x);
            if (hp == 0.0) return 0.0;
            return hp * x * deteq::boundary_value(atoms, x).t.imag();
          },
          b[i - 1], b[i], 1e-13);
    }
    return s;
  };
  // \int h(x) (x - (1 + c)) / sqrt((lp - x)(x - lm)) dx = \int_0^pi h(m + r cos) r cos dtheta.
  auto rhs_factor = [&](const SmoothTestFunction& h) {
    const double m = 1.0 + c;
    const double r = 2.0 * sc;
    double prev = kNaN;
    for (int n = 256; n <= (1 << 22); n *= 2) {
      std::vector<double> terms(static_cast<size_t>(n));
      for (int j = 0; j < n; ++j) {
        const double th = (j + 0.5) * kPi / n;
        const double x = m + r * std::cos(th);
        terms[static_cast<size_t>(j)] = h(x) * (x - m);
      }
      const double val = kPi / n * quad::compensated_sum(terms);
      if (std::abs(val - prev) <= 1e-14 * std::max(1.0, std::abs(val))) return val;
      prev = val;
    }
    return prev;
  };
  const double lf = lhs_factor(f);
  const double lg = &f == &g ? lf : lhs_factor(g);
  const double rf = rhs_factor(f);
  const double rg = &f == &g ? rf : rhs_factor(g);
  return {c / (kPi * kPi) * lf * lg, rf * rg / (4.0 * c * kPi * kPi)};
}

// ---------------------------------------------------------------------------

BiasFunctional bias_functional(const clt::KernelCouplings& k, const clt::MomentProfile& profile,
                               const SmoothTestFunction& f, const BiasOptions& opts) {
  profile.validate();
  BiasFunctional out;
  out.hs_value = kNaN;
  if (profile.v2() == 0.0 && profile.kappa == 0.0) {
    out.stable = true;
    return out;
  }
  const auto intervals = support_intervals(k.atoms);
  const auto breaks = x_breaks(f, edges_of(intervals));
  double eps = opts.eps0;
  for (int level = 0; level < opts.levels; ++level, eps *= 0.25) {
    deteq::SolverOptions so;
    const double e = eps;
    const double val = quad::integrate_breaks(
        [&](double x) {
          const double fx = f(x);
          if (fx == 0.0) return 0.0;
          const clt::KernelNode node = clt::make_node(k, Complex(x, e), so);
          return fx * clt::bias(k, profile, node).B.imag();
        },
        breaks, opts.tol);
    out.eps.push_back(eps);
    out.ladder.push_back(val);
  }
  out.value = quad::richardson(out.ladder, 0.5, 1, &out.spread) / kPi;
  out.spread /= kPi;
  out.stable = out.spread < 1e-6 * std::max(1.0, std::abs(out.value));
  if (opts.hs_cross_check) {
    out.hs_order = std::min(5, f.order());
    out.hs_value = bias_functional_hs(k, profile, f, out.hs_order, opts.hs);
  }
  return out;
}

BiasFunctional bias_functional(const PopulationModel& model, const clt::MomentProfile& profile,
                               const SmoothTestFunction& f, const BiasOptions& opts) {
  return bias_functional(clt::KernelCouplings::from_model(model), profile, f, opts);
}

double bias_functional_hs(const clt::KernelCouplings& k, const clt::MomentProfile& profile,
                          const SmoothTestFunction& f, int order, const HSOptions& opts) {
  profile.validate();
  const int kk = resolve_order(f, order, 5);
  const auto breaks = x_breaks(f, edges_of(support_intervals(k.atoms)));
  double prev = kNaN;
  double value = kNaN;
  for (int level = 0; level < opts.max_levels + 1; ++level) {
    const double grow = std::pow(2.0, level);
    const auto nodes = plane_nodes(f, opts.cutoff, kk, breaks, opts.x_panel / grow,
                                   static_cast<int>(std::ceil(opts.y_panels * grow)), 0.0, 3.0);
    std::vector<double> terms(nodes.size());
    parallel_for(nodes.size(), opts.threads, [&](size_t i) {
      const clt::BiasValue b = clt::bias(k, profile, clt::make_node(k, nodes[i].z));
      terms[i] = nodes[i].weight * (nodes[i].w * b.B).real();
    });
    value = quad::compensated_sum(terms) / kPi;
    if (level > 0 && std::abs(value - prev) < 0.1 * opts.rel_tol * std::max(1e-12, std::abs(value))) break;
    prev = value;
  }
  return value;
}

// ---------------------------------------------------------------------------

UpsilonResult upsilon_cross_check(const clt::KernelCouplings& k, const clt::MomentProfile& profile,
                                  const SmoothTestFunction& f, const SmoothTestFunction& g,
                                  const std::vector<double>& eps) {
  profile.validate();
  if (eps.size() < 2) throw std::invalid_argument("upsilon needs at least two epsilon levels");
  for (size_t i = 1; i < eps.size(); ++i) {
    if (!(std::abs(eps[i] - 0.5 * eps[i - 1]) < 1e-12 * eps[0])) {
      throw std::invalid_argument("upsilon epsilon levels must halve");
    }
  }
  UpsilonResult out;
  out.eps = eps;
  for (const double e : eps) {
    auto rule_for = [&](const SmoothTestFunction& h) {
      const auto b = x_breaks(h, {});
      quad::Rule r;
      for (size_t i = 1; i < b.size(); ++i) {
        const int panels = std::max(1, static_cast<int>(std::ceil((b[i] - b[i - 1]) / (0.5 * e))));
        r.append(quad::gauss_panels(b[i - 1], b[i], panels));
      }
      return r;
    };
    const quad::Rule rx = rule_for(f);
    const quad::Rule ry = rule_for(g);
    std::vector<clt::KernelNode> nx(rx.size());
    std::vector<clt::KernelNode> ny(ry.size());
    for (size_t i = 0; i < rx.size(); ++i) nx[i] = clt::make_node(k, Complex(rx.x[i], e));
    for (size_t j = 0; j < ry.size(); ++j) ny[j] = clt::make_node(k, Complex(ry.x[j], e));
    std::vector<double> rows(rx.size());
    for (size_t i = 0; i < rx.size(); ++i) {
      const double fx = f(rx.x[i]);
      double s = 0.0;
      if (fx != 0.0) {
        for (size_t j = 0; j < ry.size(); ++j) {
          const double gy = g(ry.x[j]);
          if (gy == 0.0) continue;
          const Complex pp = clt::theta_total(k, profile, nx[i], ny[j]).theta;
          const Complex pm = clt::theta_total(k, profile, nx[i], ny[j].conj()).theta;
          s += ry.w[j] * gy * (pp - pm).real();
        }
      }
      rows[i] = rx.w[i] * fx * s;
    }
    out.ladder.push_back(-quad::compensated_sum(rows) / (2.0 * kPi * kPi));
  }
  out.value = quad::richardson(out.ladder, 0.5, 1);
  return out;
}

// ---------------------------------------------------------------------------

GaussianLaw gaussian_law(const PopulationModel& model, const clt::MomentProfile& profile,
                         const std::vector<SmoothTestFunction>& fs, CovarianceMethod method,
                         const HSOptions& opts, double tol) {
  profile.validate();
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  BiasOptions bias_opts;
  bias_opts.tol = 0.01 * tol;
  const auto k = clt::KernelCouplings::from_model(model);
  const auto m = static_cast<Index>(fs.size());
  GaussianLaw law;
  law.mean = VectorXd::Zero(m);
  law.covariance = MatrixXd::Zero(m, m);
  const double v = profile.v2();
  const bool boundary_ok = k.transpose_diagonal && (v == 0.0 || v == 1.0);
  if (method == CovarianceMethod::Boundary && !boundary_ok) {
    throw std::invalid_argument("boundary covariance needs a real population and |V| in {0, 1}");
  }
  const bool use_boundary = method == CovarianceMethod::Boundary || (method == CovarianceMethod::Auto && boundary_ok);
  for (Index i = 0; i < m; ++i) {
    const BiasFunctional b = bias_functional(k, profile, fs[static_cast<size_t>(i)], bias_opts);
    law.mean(i) = b.value;
    if (!b.stable) {
      std::ostringstream os;
      os << "bias of " << fs[static_cast<size_t>(i)].name() << ": epsilon extrapolation spread " << b.spread;
      law.warnings.push_back(os.str());
    }
    for (Index j = 0; j <= i; ++j) {
      const auto& f = fs[static_cast<size_t>(i)];
      const auto& g = fs[static_cast<size_t>(j)];
      const double c = use_boundary ? clt_covariance_boundary(k, profile, f, g, tol).value
                                    : clt_covariance_hs(k, profile, f, g, opts).value;
      law.covariance(i, j) = c;
      law.covariance(j, i) = c;
    }
  }
  for (Index i = 0; i < m; ++i) {
    if (law.covariance(i, i) < 0.0) {
      if (law.covariance(i, i) < -1e-9) {
        throw NumericalError("negative predicted variance for " + fs[static_cast<size_t>(i)].name());
      }
      law.warnings.push_back("variance of " + fs[static_cast<size_t>(i)].name() + " clipped to 0");
      law.covariance(i, i) = 0.0;
    }
  }
  if (m > 0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(law.covariance, Eigen::EigenvaluesOnly);
    const double scale = std::max(1.0, law.covariance.diagonal().cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -1e-8 * scale) {
      law.warnings.push_back("predicted covariance matrix is not positive semidefinite");
    }
  }
  return law;
}

}  // namespace covclt::hs
