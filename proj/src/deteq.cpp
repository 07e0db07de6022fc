#include "covclt/deteq.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace covclt::deteq {

WeightedAtoms WeightedAtoms::from_model(const PopulationModel& model) {
  const SpectralAtoms& a = model.atoms();
  WeightedAtoms w;
  w.value = a.value;
  w.weight = a.multiplicity / static_cast<double>(model.n());
  w.c = model.c();
  return w;
}

WeightedAtoms WeightedAtoms::from_measure(VectorXd value, const VectorXd& mass, double c) {
  if (value.size() != mass.size() || value.size() == 0) {
    throw std::invalid_argument("measure atoms and masses must have the same positive length");
  }
  if (!(c > 0.0)) throw std::invalid_argument("c must be positive");
  if ((mass.array() < 0.0).any() || std::abs(mass.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("measure masses must be nonnegative and sum to 1");
  }
  if ((value.array() < 0.0).any()) throw std::invalid_argument("measure atoms must be nonnegative");
  WeightedAtoms w;
  w.value = std::move(value);
  w.weight = c * mass;
  w.c = c;
  return w;
}

double WeightedAtoms::lambda_max() const { return value.maxCoeff(); }

double WeightedAtoms::support_bound() const {
  const double s = 1.0 + std::sqrt(c);
  return lambda_max() * s * s;
}

namespace {

struct MapValue {
  Complex F;   // fixed-point image
  Complex dF;  // derivative of the map
};

// F(t~) = -1 / (z - sum_a w_a l_a / (1 + t~ l_a)).
MapValue fixed_point_map(const WeightedAtoms& atoms, Complex z, Complex tt) {
  Complex s = 0.0;
  Complex s2 = 0.0;
  for (Index a = 0; a < atoms.value.size(); ++a) {
    const double lam = atoms.value(a);
    const Complex e = 1.0 / (1.0 + tt * lam);
    s += atoms.weight(a) * lam * e;
    s2 += atoms.weight(a) * lam * lam * e * e;
  }
  const Complex F = -1.0 / (z - s);
  return {F, F * F * s2};
}

double scaled_residual(Complex tt, Complex F) {
  return std::abs(tt - F) / std::max(1.0, std::abs(tt));
}

// Step length |t~ - F| in the hyperbolic metric of the upper half-plane,
// where F cannot expand distances; the Euclidean residual can grow on the
// way to the root. Real iterates (z < 0) fall back to the scaled residual.
double hyperbolic_step(Complex tt, Complex F) {
  if (!(tt.imag() > 0.0 && F.imag() > 0.0)) return scaled_residual(tt, F);
  return std::acosh(1.0 + std::norm(tt - F) / (2.0 * tt.imag() * F.imag()));
}

bool in_class(Complex z, Complex tt) {
  if (!std::isfinite(tt.real()) || !std::isfinite(tt.imag())) return false;
  if (z.imag() == 0.0) return tt.imag() == 0.0 && tt.real() > 0.0;
  return tt.imag() > 0.0 && (z * tt).imag() >= -1e-14 * std::abs(z * tt);
}

void check_domain(Complex z) {
  if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
    throw std::invalid_argument("z must be finite");
  }
  if (z.imag() == 0.0 && z.real() >= 0.0) {
    throw std::invalid_argument("z = " + to_string(z) + " lies on [0, inf)");
  }
}

// Solves for Im z > 0 or z < 0 real.
StieltjesState solve_upper(const WeightedAtoms& atoms, Complex z, const SolverOptions& opts) {
  Complex tt = -1.0 / z;
  if (opts.warm_start && in_class(z, *opts.warm_start)) tt = *opts.warm_start;

  MapValue m = fixed_point_map(atoms, z, tt);
  double res = scaled_residual(tt, m.F);
  double h = hyperbolic_step(tt, m.F);
  double omega = 1.0;
  int it = 0;
  int stalled = 0;
  for (; it < opts.max_iter && res >= opts.tol; ++it) {
    const double before = res;
    // Newton step on t~ - F(t~) with backtracking, after a few fixed-point
    // steps have moved t~ away from the poles -1/lambda (t~0 = -1/z can sit
    // next to one). Steps must shorten the hyperbolic step length: the
    // Euclidean residual has shallow minima near Im t~ = 0 that Newton
    // otherwise settles into. Close to the root, where that length is lost
    // in rounding, a smaller residual suffices.
    const Complex denom = 1.0 - m.dF;
    if ((it >= 8 || res < 1e-2) && std::abs(denom) > 1e-300) {
      const Complex dir = -(tt - m.F) / denom;
      bool took = false;
      for (double lambda = 1.0; lambda > 1e-3; lambda *= 0.5) {
        Complex cand = tt + lambda * dir;
        if (z.imag() == 0.0) cand = Complex(cand.real(), 0.0);
        if (!in_class(z, cand)) continue;
        const MapValue mc = fixed_point_map(atoms, z, cand);
        const double rc = scaled_residual(cand, mc.F);
        const double hc = hyperbolic_step(cand, mc.F);
        if (hc < h || (h < 1e-4 && rc < res)) {
          tt = cand;
          m = mc;
          res = rc;
          h = hc;
          took = true;
          break;
        }
      }
      if (took) {
        stalled = 0;
        continue;
      }
    }
    // Damped fixed-point step, always taken; omega is halved when the
    // hyperbolic step length grows and relaxed again when it falls.
    const Complex cand = tt + omega * (m.F - tt);
    if (!in_class(z, cand)) break;
    const MapValue mc = fixed_point_map(atoms, z, cand);
    const double hc = hyperbolic_step(cand, mc.F);
    omega = hc > h ? std::max(omega * 0.5, 1.0 / 64.0) : std::min(1.0, 2.0 * omega);
    tt = cand;
    m = mc;
    res = scaled_residual(cand, mc.F);
    h = hc;
    stalled = res < before ? 0 : stalled + 1;
    if (stalled > 1000) break;
  }

  // The linear relation fixes the other transform. Whichever of t, t~ carries
  // the (1 - c)/z pole is the one rebuilt, so the relation adds a large exact
  // term instead of cancelling: t~ from the trace of T when c <= 1, t from
  // the solved t~ when c > 1.
  const double c = atoms.c;
  StieltjesState st;
  st.z = z;
  if (c <= 1.0) {
    Complex sum_e = 0.0;
    for (Index a = 0; a < atoms.value.size(); ++a) {
      sum_e += atoms.weight(a) / (1.0 + tt * atoms.value(a));
    }
    st.t = -sum_e / (z * c);
    st.t_tilde = -(1.0 - c) / z + c * st.t;
  } else {
    st.t_tilde = tt;
    st.t = (tt + (1.0 - c) / z) / c;
  }
  if (z.imag() == 0.0) {
    st.t = Complex(st.t.real(), 0.0);
    st.t_tilde = Complex(st.t_tilde.real(), 0.0);
  }
  st.residual = scaled_residual(st.t_tilde, fixed_point_map(atoms, z, st.t_tilde).F);
  st.iterations = it;
  if (!(st.residual < 10.0 * opts.tol)) {
    std::ostringstream os;
    os << "canonical equation did not converge at z = " << to_string(z) << " after " << it
       << " iterations (residual " << st.residual << ", tol " << opts.tol << ")";
    throw NumericalError(os.str());
  }
  return st;
}

}  // namespace

StieltjesState solve_canonical(const WeightedAtoms& atoms, Complex z, const SolverOptions& opts) {
  check_domain(z);
  if (!(opts.tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (z.imag() >= 0.0) return solve_upper(atoms, z, opts);
  SolverOptions mirrored = opts;
  if (opts.warm_start) mirrored.warm_start = std::conj(*opts.warm_start);
  StieltjesState st = solve_upper(atoms, std::conj(z), mirrored);
  st.z = z;
  st.t = std::conj(st.t);
  st.t_tilde = std::conj(st.t_tilde);
  return st;
}

StieltjesState solve_canonical(const PopulationModel& model, Complex z, const SolverOptions& opts) {
  return solve_canonical(WeightedAtoms::from_model(model), z, opts);
}

Complex mp_closed_form(double c, Complex z) {
  if (!(c > 0.0)) throw std::invalid_argument("c must be positive");
  if (z == Complex(0.0, 0.0)) throw std::invalid_argument("z must be nonzero");
  const double sc = std::sqrt(c);
  const double lp = (1.0 + sc) * (1.0 + sc);
  const double lm = (1.0 - sc) * (1.0 - sc);
  // Product of principal roots: analytic off [lm, lp] and ~ z - (1 + c) at infinity.
  const Complex s = std::sqrt(z - lp) * std::sqrt(z - lm);
  return (s - (z - (1.0 - c))) / (2.0 * c * z);
}

VectorXcd resolvent_eigenvalues(const PopulationModel& model, const StieltjesState& state) {
  const VectorXd& lam = model.eigenvalues();
  VectorXcd d(lam.size());
  for (Index i = 0; i < lam.size(); ++i) d(i) = -1.0 / (state.z * (1.0 + state.t_tilde * lam(i)));
  return d;
}

ResolventEquivalent build_resolvent_equivalent(const PopulationModel& model,
                                               const StieltjesState& state, double tol) {
  const VectorXd& lam = model.eigenvalues();
  double min_pivot = std::numeric_limits<double>::infinity();
  Index worst = 0;
  for (Index i = 0; i < lam.size(); ++i) {
    const double p = std::abs(1.0 + state.t_tilde * lam(i));
    if (p < min_pivot) {
      min_pivot = p;
      worst = i;
    }
  }
  if (min_pivot < 1e-14) {
    std::ostringstream os;
    os << "|1 + t~ lambda| = " << min_pivot << " for lambda = " << lam(worst)
       << " at z = " << to_string(state.z) << ": z is at a singularity of T";
    throw NumericalError(os.str());
  }
  const VectorXcd d = resolvent_eigenvalues(model, state);
  ResolventEquivalent out;
  out.z = state.z;
  out.min_pivot = min_pivot;
  if (model.is_diagonal()) {
    out.T = d.asDiagonal();
    out.T_transpose = out.T;
  } else {
    const MatrixXcd u = model.eigenvectors();
    out.T = u * d.asDiagonal() * u.adjoint();
    const MatrixXcd ub = u.conjugate();
    out.T_transpose = ub * d.asDiagonal() * ub.adjoint();
  }
  const Complex trace_t = out.T.trace() / static_cast<double>(model.N());
  if (std::abs(trace_t - state.t) > 10.0 * tol * std::max(1.0, std::abs(state.t))) {
    throw NumericalError("(1/N) tr T = " + to_string(trace_t) + " disagrees with t = " +
                         to_string(state.t));
  }
  return out;
}

DeterminantIdentity determinant_identity(const PopulationModel& model, Complex z,
                                         const SolverOptions& opts) {
  if (z.imag() == 0.0) throw std::invalid_argument("determinant identity needs Im z != 0");
  const StieltjesState st = solve_canonical(model, z, opts);
  const ResolventEquivalent re = build_resolvent_equivalent(model, st, opts.tol);
  const MatrixXcd r = model.matrix();
  const MatrixXcd rt = r * re.T;
  const double tr = (rt * rt.adjoint()).trace().real() / static_cast<double>(model.n());
  const double a2 = std::norm(st.t_tilde);
  DeterminantIdentity out;
  out.lhs = 1.0 - std::norm(z) * a2 * tr;
  out.rhs = a2 * z.imag() / st.t_tilde.imag();
  out.relative_error = std::abs(out.lhs - out.rhs) / std::max(std::abs(out.rhs), 1e-300);
  return out;
}

Complex t_tilde_derivative(const WeightedAtoms& atoms, const StieltjesState& state) {
  const Complex tt = state.t_tilde;
  Complex s2 = 0.0;
  for (Index a = 0; a < atoms.value.size(); ++a) {
    const double lam = atoms.value(a);
    const Complex h = tt * lam / (1.0 + tt * lam);
    s2 += atoms.weight(a) * h * h;
  }
  const Complex denom = 1.0 - s2;
  if (std::abs(denom) < 1e-12) {
    throw NumericalError("t~' denominator vanishes at z = " + to_string(state.z) +
                         " (point on the support)");
  }
  return tt * tt / denom;
}

Complex t_tilde_derivative(const PopulationModel& model, const StieltjesState& state) {
  return t_tilde_derivative(WeightedAtoms::from_model(model), state);
}

namespace {

double distance_to_segment(Complex z, double lo, double hi) {
  const double x = std::clamp(z.real(), lo, hi);
  return std::abs(z - Complex(x, 0.0));
}

}  // namespace

Complex t_tilde_derivative_cauchy(const WeightedAtoms& atoms, Complex z, int nodes) {
  const double dist = distance_to_segment(z, 0.0, atoms.support_bound());
  const double radius = 0.5 * (z.imag() != 0.0 ? std::min(dist, std::abs(z.imag())) : dist);
  if (!(radius > 0.0)) throw std::invalid_argument("z lies on the support");
  const StieltjesState center = solve_canonical(atoms, z);
  Complex acc = 0.0;
  SolverOptions opts;
  for (int j = 0; j < nodes; ++j) {
    const Complex w = std::polar(1.0, 2.0 * kPi * j / nodes);
    opts.warm_start = center.t_tilde;
    acc += solve_canonical(atoms, z + radius * w, opts).t_tilde / w;
  }
  return acc / (static_cast<double>(nodes) * radius);
}

// ---------------------------------------------------------------------------

namespace {

// Newton's method for t~ at a real point, started next to the boundary value.
bool polish_real(const WeightedAtoms& atoms, double x, Complex& tt, double& last_step) {
  const Complex z(x, 0.0);
  last_step = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 60; ++it) {
    const MapValue m = fixed_point_map(atoms, z, tt);
    const Complex denom = 1.0 - m.dF;
    if (std::abs(denom) < 1e-14) return false;
    const Complex step = (tt - m.F) / denom;
    tt -= step;
    last_step = std::abs(step) / std::max(1.0, std::abs(tt));
    if (!std::isfinite(last_step)) return false;
    if (last_step < 1e-15) return true;
  }
  return last_step < 1e-12;
}

}  // namespace

BoundaryValue boundary_value(const WeightedAtoms& atoms, double x, const BoundaryOptions& opts) {
  if (x == 0.0 || !std::isfinite(x)) throw std::invalid_argument("boundary value needs finite x != 0");
  if (!(opts.eps0 > 0.0) || opts.levels < 3) throw std::invalid_argument("invalid epsilon ladder");

  BoundaryValue bv;
  bv.x = x;
  // Newton at the real point, kept when it lands within the ladder's error
  // band around the extrapolated value.
  auto try_polish = [&](Complex guess, double err, Complex* out, double* step) {
    Complex tt = guess;
    const double scale = std::max(1.0, std::abs(guess));
    if (tt.imag() <= 0.0) tt = Complex(tt.real(), std::max(1e-12, std::abs(tt) * 1e-12));
    if (!polish_real(atoms, x, tt, *step)) return false;
    if (std::abs(tt - guess) > std::max(100.0 * err, 1e-6) * scale || tt.imag() < -1e-12 * scale) return false;
    *out = Complex(tt.real(), std::max(0.0, tt.imag()));
    return true;
  };

  Complex prev_v = 0.0;
  Complex prev_r = 0.0;
  Complex cur_r = 0.0;
  double err = std::numeric_limits<double>::infinity();
  bool polished = false;
  Complex value;
  double step = 0.0;
  SolverOptions sopts;
  double eps = opts.eps0;
  for (int k = 0; k < opts.levels; ++k, eps *= 0.5) {
    const StieltjesState st = solve_canonical(atoms, Complex(x, eps), sopts);
    sopts.warm_start = st.t_tilde;
    const Complex v = st.t_tilde;
    bv.eps_used = eps;
    if (k >= 1) {
      prev_r = cur_r;
      cur_r = 2.0 * v - prev_v;
      if (k >= 2) {
        err = std::abs(cur_r - prev_r) / std::max(1.0, std::abs(cur_r));
        if (opts.polish && err < 1e-6 && try_polish(cur_r, err, &value, &step)) {
          polished = true;
          break;
        }
        if (err < 0.01 * opts.target) break;
      }
    } else {
      cur_r = v;
    }
    prev_v = v;
  }
  bv.last = cur_r;
  bv.prev = prev_r;
  bv.error = err;
  if (!polished && opts.polish) polished = try_polish(cur_r, err, &value, &step);
  if (polished) {
    bv.error = std::min(err, std::max(step, 1e-15));
  } else {
    value = cur_r;
  }
  bv.t_tilde = value;
  bv.t = (value + (1.0 - atoms.c) / x) / atoms.c;
  bv.stable = bv.error < opts.target;
  return bv;
}

BoundaryValue boundary_value(const PopulationModel& model, double x, const BoundaryOptions& opts) {
  return boundary_value(WeightedAtoms::from_model(model), x, opts);
}

// ---------------------------------------------------------------------------

namespace {

double density_at(const WeightedAtoms& atoms, double x, double* eps_used = nullptr) {
  if (x <= 0.0) return 0.0;
  const BoundaryValue bv = boundary_value(atoms, x);
  if (eps_used != nullptr) *eps_used = bv.eps_used;
  return std::max(0.0, bv.t.imag() / kPi);
}

std::vector<std::pair<Index, Index>> runs_above(const std::vector<double>& d, double threshold) {
  std::vector<std::pair<Index, Index>> runs;
  Index start = -1;
  const auto n = static_cast<Index>(d.size());
  for (Index i = 0; i < n; ++i) {
    const bool in = d[static_cast<size_t>(i)] > threshold;
    if (in && start < 0) start = i;
    if (!in && start >= 0) {
      runs.emplace_back(start, i - 1);
      start = -1;
    }
  }
  if (start >= 0) runs.emplace_back(start, n - 1);
  return runs;
}

// Bisection for the crossing of density - threshold between an outside point
// `out` and an inside point `in`.
double refine_edge(const WeightedAtoms& atoms, double out, double in, double threshold) {
  while (std::abs(in - out) > 1e-6) {
    const double mid = 0.5 * (in + out);
    if (density_at(atoms, mid) > threshold) {
      in = mid;
    } else {
      out = mid;
    }
  }
  return 0.5 * (in + out);
}

}  // namespace

SpectralSupport density_and_support(const WeightedAtoms& atoms, const std::vector<double>& grid,
                                    double threshold) {
  if (grid.size() < 2) throw std::invalid_argument("density grid needs at least two points");
  for (size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("density grid must be increasing");
  }
  SpectralSupport out;
  out.grid = grid;
  out.density.resize(grid.size());
  for (size_t i = 0; i < grid.size(); ++i) {
    double eps = 0.0;
    out.density[i] = density_at(atoms, grid[i], &eps);
    out.epsilon_used = std::max(out.epsilon_used, eps);
  }
  for (size_t i = 1; i < grid.size(); ++i) {
    out.mass += 0.5 * (grid[i] - grid[i - 1]) * (out.density[i] + out.density[i - 1]);
  }
  // Atom at zero: 1 - min(N, n)/N for the population measure with positive atoms.
  double positive = 0.0;
  for (Index a = 0; a < atoms.value.size(); ++a) {
    if (atoms.value(a) > 0.0) positive += atoms.weight(a);
  }
  out.atom_at_zero = std::max(0.0, 1.0 - std::min(positive, 1.0) / atoms.c);

  const auto runs = runs_above(out.density, threshold);
  for (const auto& [lo, hi] : runs) {
    const auto l = static_cast<size_t>(lo);
    const auto h = static_cast<size_t>(hi);
    const double left = l == 0 ? grid.front() : refine_edge(atoms, grid[l - 1], grid[l], threshold);
    const double right =
        h + 1 == grid.size() ? grid.back() : refine_edge(atoms, grid[h + 1], grid[h], threshold);
    out.support_intervals.emplace_back(left, right);
  }

  // Interval count under a 2x refinement.
  std::vector<double> fine;
  fine.reserve(2 * grid.size());
  for (size_t i = 0; i < grid.size(); ++i) {
    fine.push_back(out.density[i]);
    if (i + 1 < grid.size()) fine.push_back(density_at(atoms, 0.5 * (grid[i] + grid[i + 1])));
  }
  const size_t fine_runs = runs_above(fine, threshold).size();
  if (fine_runs != runs.size()) {
    std::ostringstream os;
    os << "support interval count changes from " << runs.size() << " to " << fine_runs
       << " under 2x grid refinement; the grid is too coarse";
    out.warnings.push_back(os.str());
  }
  return out;
}

SpectralSupport density_and_support(const PopulationModel& model, const std::vector<double>& grid,
                                    double threshold) {
  return density_and_support(WeightedAtoms::from_model(model), grid, threshold);
}

std::vector<double> default_support_grid(const WeightedAtoms& atoms, int count) {
  if (count < 2) throw std::invalid_argument("grid needs at least two points");
  const double hi = 1.05 * std::max(atoms.support_bound(), 1e-6);
  std::vector<double> g(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) g[static_cast<size_t>(i)] = hi * i / (count - 1);
  return g;
}

}  // namespace covclt::deteq
