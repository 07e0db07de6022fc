#include "covclt/testfn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

namespace covclt::hs {

SmoothTestFunction::SmoothTestFunction(std::string name, double lo, double hi, int order,
                                       Evaluator eval)
    : name_(std::move(name)), lo_(lo), hi_(hi), order_(order), eval_(std::move(eval)) {
  if (!(hi > lo)) throw std::invalid_argument("test function support must have hi > lo");
  if (order < 0) throw std::invalid_argument("test function order must be nonnegative");
}

double SmoothTestFunction::derivative(int l, double x) const {
  if (l < 0 || l > order_ + 1) throw std::out_of_range("derivative order out of range");
  std::vector<double> buf(static_cast<size_t>(l) + 1);
  derivatives(x, l, buf.data());
  return buf[static_cast<size_t>(l)];
}

void SmoothTestFunction::derivatives(double x, int upto, double* out) const {
  if (upto < 0 || upto > order_ + 1) throw std::out_of_range("derivative order out of range");
  if (x <= lo_ || x >= hi_) {
    std::fill(out, out + upto + 1, 0.0);
    return;
  }
  eval_(x, upto, out);
}

namespace {

using Poly = std::vector<double>;  // monomial coefficients, constant first

Poly derive(const Poly& p) {
  if (p.size() <= 1) return {0.0};
  Poly d(p.size() - 1);
  for (size_t i = 1; i < p.size(); ++i) d[i - 1] = static_cast<double>(i) * p[i];
  return d;
}

Poly multiply(const Poly& a, const Poly& b) {
  Poly r(a.size() + b.size() - 1, 0.0);
  for (size_t i = 0; i < a.size(); ++i) {
    for (size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  }
  return r;
}

double horner(const Poly& p, double x) {
  double s = 0.0;
  for (auto it = p.rbegin(); it != p.rend(); ++it) s = s * x + *it;
  return s;
}

std::vector<Poly> derivative_table(Poly p, int upto) {
  std::vector<Poly> t;
  t.reserve(static_cast<size_t>(upto) + 1);
  for (int l = 0; l <= upto; ++l) {
    t.push_back(p);
    p = derive(p);
  }
  return t;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// C^8 smoothstep on [0, 1]: u^9 sum_k C(8+k, k) (1-u)^k.
const std::vector<Poly>& smoothstep_table() {
  static const std::vector<Poly> table = [] {
    constexpr int m = 8;
    Poly s = {0.0};
    Poly one_minus_pow = {1.0};
    for (int k = 0; k <= m; ++k) {
      Poly term = one_minus_pow;
      for (double& c : term) c *= binomial(m + k, k);
      if (s.size() < term.size()) s.resize(term.size(), 0.0);
      for (size_t i = 0; i < term.size(); ++i) s[i] += term[i];
      one_minus_pow = multiply(one_minus_pow, {1.0, -1.0});
    }
    Poly u9(m + 2, 0.0);
    u9[m + 1] = 1.0;
    return derivative_table(multiply(u9, s), m + 1);
  }();
  return table;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

SmoothTestFunction bump(double a, double b, int p) {
  if (p < 2) throw std::invalid_argument("bump exponent must be at least 2");
  // (1 - u^2)^p in monomials of u.
  Poly base(static_cast<size_t>(2 * p) + 1, 0.0);
  for (int j = 0; j <= p; ++j) base[static_cast<size_t>(2 * j)] = binomial(p, j) * (j % 2 == 0 ? 1.0 : -1.0);
  const auto table = std::make_shared<const std::vector<Poly>>(derivative_table(base, p));
  const double scale = 2.0 / (b - a);
  const double mid = 0.5 * (a + b);
  return SmoothTestFunction("bump(" + fmt(a) + "," + fmt(b) + (p != 4 ? "," + std::to_string(p) : "") + ")",
                            a, b, p - 1, [table, scale, mid](double x, int upto, double* out) {
                              const double u = (x - mid) * scale;
                              double s = 1.0;
                              for (int l = 0; l <= upto; ++l) {
                                out[l] = s * horner((*table)[static_cast<size_t>(l)], u);
                                s *= scale;
                              }
                            });
}

SmoothTestFunction smooth_bump(double a, double b, int order) {
  if (order < 2 || order > 16) throw std::invalid_argument("smooth_bump order must lie in [2, 16]");
  const double scale = 2.0 / (b - a);
  const double mid = 0.5 * (a + b);
  return SmoothTestFunction(
      "smooth_bump(" + fmt(a) + "," + fmt(b) + ")", a, b, order,
      [scale, mid](double x, int upto, double* out) {
        const double u = (x - mid) * scale;
        // F = exp(g), g = 1 - 1/(1 - u^2); F^(n) = sum_k C(n-1, k) g^(k+1) F^(n-1-k).
        double g[18];
        double fact = 1.0;
        for (int k = 1; k <= upto; ++k) {
          fact *= k;
          g[k] = -0.5 * fact *
                 (std::pow(1.0 - u, -(k + 1)) + (k % 2 == 0 ? 1.0 : -1.0) * std::pow(1.0 + u, -(k + 1)));
        }
        double F[18];
        F[0] = std::exp(1.0 - 1.0 / (1.0 - u * u));
        for (int n = 1; n <= upto; ++n) {
          double s = 0.0;
          for (int k = 0; k <= n - 1; ++k) s += binomial(n - 1, k) * g[k + 1] * F[n - 1 - k];
          F[n] = s;
        }
        double sc = 1.0;
        for (int l = 0; l <= upto; ++l) {
          out[l] = F[l] * sc;
          sc *= scale;
        }
      });
}

SmoothTestFunction poly(const std::vector<double>& coeffs, double a, double b, double ramp) {
  if (coeffs.empty()) throw std::invalid_argument("poly needs at least one coefficient");
  if (!(b >= a) || !(ramp > 0.0)) throw std::invalid_argument("poly window needs a <= b and ramp > 0");
  constexpr int kOrder = 8;
  const auto p = std::make_shared<const std::vector<Poly>>(derivative_table(coeffs, kOrder + 1));
  std::string name = "poly(";
  for (size_t i = 0; i < coeffs.size(); ++i) name += (i ? ";" : "") + fmt(coeffs[i]);
  name += "," + fmt(a) + "," + fmt(b) + "," + fmt(ramp) + ")";
  SmoothTestFunction f(name, a - ramp, b + ramp, kOrder, [p, a, b, ramp](double x, int upto, double* out) {
    const auto& s = smoothstep_table();
    // Window derivatives h^(j)(x).
    double h[kOrder + 2];
    if (x < a) {
      const double u = (x - (a - ramp)) / ramp;
      double sc = 1.0;
      for (int j = 0; j <= upto; ++j, sc /= ramp) h[j] = sc * horner(s[static_cast<size_t>(j)], u);
    } else if (x > b) {
      const double u = ((b + ramp) - x) / ramp;
      double sc = 1.0;
      for (int j = 0; j <= upto; ++j, sc /= -ramp) h[j] = sc * horner(s[static_cast<size_t>(j)], u);
    } else {
      h[0] = 1.0;
      for (int j = 1; j <= upto; ++j) h[j] = 0.0;
    }
    for (int l = 0; l <= upto; ++l) {
      double acc = 0.0;
      for (int j = 0; j <= l; ++j) acc += binomial(l, j) * horner((*p)[static_cast<size_t>(j)], x) * h[l - j];
      out[l] = acc;
    }
  });
  f.set_breakpoints({a, b});
  return f;
}

SmoothTestFunction chebfit(const std::vector<double>& xs, const std::vector<double>& ys, int degree,
                           int order) {
  if (xs.size() != ys.size()) throw std::invalid_argument("chebfit needs as many x as y samples");
  if (degree < 1 || degree > 64) throw std::invalid_argument("chebfit degree must lie in [1, 64]");
  if (static_cast<int>(xs.size()) < degree + 1) {
    throw std::invalid_argument("chebfit needs more samples than the degree");
  }
  if (order < 0 || order + 1 > degree) throw std::invalid_argument("chebfit order too large for degree");
  const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
  const double lo = *mn;
  const double hi = *mx;
  if (!(hi > lo)) throw std::invalid_argument("chebfit samples must span an interval");
  const auto m = static_cast<Index>(xs.size());
  MatrixXd basis(m, degree + 1);
  VectorXd rhs(m);
  for (Index i = 0; i < m; ++i) {
    const double t = (2.0 * xs[static_cast<size_t>(i)] - lo - hi) / (hi - lo);
    basis(i, 0) = 1.0;
    if (degree >= 1) basis(i, 1) = t;
    for (int j = 2; j <= degree; ++j) basis(i, j) = 2.0 * t * basis(i, j - 1) - basis(i, j - 2);
    rhs(i) = ys[static_cast<size_t>(i)];
  }
  const VectorXd c0 = basis.colPivHouseholderQr().solve(rhs);

  // Chebyshev coefficients of successive derivatives (in t).
  auto table = std::make_shared<std::vector<VectorXd>>();
  table->push_back(c0);
  for (int l = 1; l <= order + 1; ++l) {
    const VectorXd& c = table->back();
    const Index n = c.size() - 1;
    VectorXd d = VectorXd::Zero(std::max<Index>(n, 1));
    for (Index j = n; j >= 1; --j) {
      const double next = j + 1 <= n - 1 ? d(j + 1) : 0.0;
      if (j - 1 < d.size()) d(j - 1) = next + 2.0 * static_cast<double>(j) * c(j);
    }
    d(0) *= 0.5;
    table->push_back(d);
  }
  const double scale = 2.0 / (hi - lo);
  const double mid = 0.5 * (lo + hi);
  return SmoothTestFunction("chebfit", lo, hi, order, [table, scale, mid](double x, int upto, double* out) {
    const double t = (x - mid) * scale;
    double sc = 1.0;
    for (int l = 0; l <= upto; ++l, sc *= scale) {
      const VectorXd& c = (*table)[static_cast<size_t>(l)];
      // Clenshaw
      double b1 = 0.0;
      double b2 = 0.0;
      for (Index j = c.size() - 1; j >= 1; --j) {
        const double b0 = 2.0 * t * b1 - b2 + c(j);
        b2 = b1;
        b1 = b0;
      }
      out[l] = sc * (t * b1 - b2 + c(0));
    }
  });
}

SmoothTestFunction chebfit_csv(const std::string& path, int degree, int order) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open sample file '" + path + "'");
  std::vector<double> xs;
  std::vector<double> ys;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a;
    std::string b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',')) {
      throw std::invalid_argument("sample file rows must read x,f");
    }
    try {
      xs.push_back(std::stod(a));
      ys.push_back(std::stod(b));
    } catch (const std::exception&) {
      if (!first) throw std::invalid_argument("malformed sample row '" + line + "'");
    }
    first = false;
  }
  return chebfit(xs, ys, degree, order);
}

SmoothTestFunction parse_test_function(const std::string& spec) {
  static const std::regex call(R"(^\s*(\w+)\s*\((.*)\)\s*$)");
  std::smatch m;
  if (!std::regex_match(spec, m, call)) {
    throw std::invalid_argument("unknown test function '" + spec + "'");
  }
  const std::string name = m[1];
  const std::string args = m[2];
  if (name == "chebfit") return chebfit_csv(args);
  std::vector<std::string> parts;
  std::stringstream ss(args);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(item);
  auto num = [&](size_t i) {
    size_t used = 0;
    const double v = std::stod(parts.at(i), &used);
    return v;
  };
  try {
    if (name == "bump" && (parts.size() == 2 || parts.size() == 3)) {
      return bump(num(0), num(1), parts.size() == 3 ? static_cast<int>(num(2)) : 4);
    }
    if (name == "smooth_bump" && parts.size() == 2) return smooth_bump(num(0), num(1));
    if (name == "poly" && (parts.size() == 3 || parts.size() == 4)) {
      std::vector<double> coeffs;
      std::stringstream cs(parts[0]);
      while (std::getline(cs, item, ';')) coeffs.push_back(std::stod(item));
      return poly(coeffs, num(1), num(2), parts.size() == 4 ? num(3) : 0.5);
    }
  } catch (const std::logic_error& e) {
    throw std::invalid_argument("malformed test function '" + spec + "': " + e.what());
  }
  throw std::invalid_argument("unknown test function '" + spec + "'");
}

ConsistencyReport derivative_consistency(const SmoothTestFunction& f, int points, double tol,
                                         unsigned long long seed) {
  std::mt19937_64 rng(seed);
  const double len = f.hi() - f.lo();
  const double h = 1e-5 * len;
  std::uniform_real_distribution<double> pick(f.lo() + 0.01 * len, f.hi() - 0.01 * len);
  const int k = f.order();
  std::vector<double> xs;
  while (static_cast<int>(xs.size()) < points) {
    const double x = pick(rng);
    bool near = false;
    for (double b : f.breakpoints()) near = near || std::abs(x - b) < 4.0 * h;
    if (!near) xs.push_back(x);
  }
  std::vector<double> scale(static_cast<size_t>(k) + 2, 1.0);
  std::vector<double> buf(static_cast<size_t>(k) + 2);
  for (double x : xs) {
    f.derivatives(x, k + 1, buf.data());
    for (int l = 0; l <= k + 1; ++l) scale[static_cast<size_t>(l)] = std::max(scale[static_cast<size_t>(l)], std::abs(buf[static_cast<size_t>(l)]));
  }
  ConsistencyReport rep;
  std::vector<double> up(static_cast<size_t>(k) + 2);
  std::vector<double> dn(static_cast<size_t>(k) + 2);
  for (double x : xs) {
    f.derivatives(x, k + 1, buf.data());
    f.derivatives(x + h, k + 1, up.data());
    f.derivatives(x - h, k + 1, dn.data());
    for (int l = 0; l <= k; ++l) {
      const double fd = (up[static_cast<size_t>(l)] - dn[static_cast<size_t>(l)]) / (2.0 * h);
      const double err = std::abs(fd - buf[static_cast<size_t>(l) + 1]) / scale[static_cast<size_t>(l) + 1];
      if (err > rep.max_error) {
        rep.max_error = err;
        rep.worst_order = l;
        rep.worst_x = x;
      }
    }
  }
  rep.ok = rep.max_error < tol;
  return rep;
}

}  // namespace covclt::hs
