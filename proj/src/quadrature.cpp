#include "covclt/quadrature.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace covclt::quad {

namespace {

using Gauss16 = boost::math::quadrature::gauss<double, 16>;

void add_panel(Rule& r, double a, double b) {
  const auto& xs = Gauss16::abscissa();
  const auto& ws = Gauss16::weights();
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  for (size_t i = 0; i < xs.size(); ++i) {
    r.x.push_back(mid - half * xs[i]);
    r.w.push_back(std::abs(half) * ws[i]);
    r.x.push_back(mid + half * xs[i]);
    r.w.push_back(std::abs(half) * ws[i]);
  }
}

}  // namespace

void Rule::append(const Rule& other) {
  x.insert(x.end(), other.x.begin(), other.x.end());
  w.insert(w.end(), other.w.begin(), other.w.end());
}

Rule gauss_panels(double a, double b, int panels) {
  Rule r;
  if (!(b > a) || panels < 1) return r;
  for (int j = 0; j < panels; ++j) {
    add_panel(r, a + (b - a) * j / panels, a + (b - a) * (j + 1) / panels);
  }
  return r;
}

Rule graded_panels(double a, double b, int panels, double grading) {
  Rule r;
  if (a == b || panels < 1) return r;
  auto edge = [&](int j) {
    return a + (b - a) * std::pow(static_cast<double>(j) / panels, grading);
  };
  for (int j = 0; j < panels; ++j) add_panel(r, edge(j), edge(j + 1));
  return r;
}

Rule geometric_panels(double a, double b, int layers, double sigma) {
  Rule r;
  if (a == b || layers < 0) return r;
  double outer = 1.0;
  for (int k = 0; k < layers; ++k) {
    const double inner = outer * sigma;
    add_panel(r, a + (b - a) * inner, a + (b - a) * outer);
    outer = inner;
  }
  add_panel(r, a, a + (b - a) * outer);
  return r;
}

Rule two_sided_graded_panels(double a, double b, int panels, double grading) {
  const double mid = 0.5 * (a + b);
  const int half = std::max(1, panels / 2);
  Rule left = graded_panels(a, mid, half, grading);
  left.append(graded_panels(b, mid, half, grading));
  return left;
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol,
                 double* error) {
  if (a == b) {
    if (error != nullptr) *error = 0.0;
    return 0.0;
  }
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 20, tol, &err);
  if (error != nullptr) *error = err;
  return v;
}

double integrate_breaks(const std::function<double(double)>& f, const std::vector<double>& breaks,
                        double tol) {
  std::vector<double> b = breaks;
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  std::vector<double> parts;
  for (size_t i = 1; i < b.size(); ++i) parts.push_back(integrate(f, b[i - 1], b[i], tol));
  return compensated_sum(parts);
}

double integrate_endpoint_singular(const std::function<double(double, double)>& f, double a,
                                   double b, double tol, double* error) {
  if (a == b) {
    if (error != nullptr) *error = 0.0;
    return 0.0;
  }
  // Building the abscissa tables is costly; one integrator per thread.
  thread_local boost::math::quadrature::tanh_sinh<double> ts;
  double err = 0.0;
  const double v = ts.integrate(f, a, b, tol, &err);
  if (error != nullptr) *error = err;
  return v;
}

namespace {

template <class T>
T neville(std::vector<T> col, double ratio, int first_power, double* spread) {
  if (col.empty()) throw std::invalid_argument("richardson needs at least one value");
  // col[k] holds the value at step h_0 ratio^k.
  T prev_diag = col.back();
  T diag = col.back();
  for (size_t level = 1; level < col.size(); ++level) {
    const double factor = std::pow(ratio, -static_cast<double>(first_power + static_cast<int>(level) - 1));
    for (size_t k = col.size() - 1; k >= level; --k) {
      col[k] = (factor * col[k] - col[k - 1]) / (factor - 1.0);
    }
    prev_diag = diag;
    diag = col.back();
  }
  if (spread != nullptr) *spread = col.size() > 1 ? std::abs(diag - prev_diag) : 0.0;
  return diag;
}

}  // namespace

Complex richardson(const std::vector<Complex>& values, double ratio, int first_power,
                   double* spread) {
  return neville(values, ratio, first_power, spread);
}

double richardson(const std::vector<double>& values, double ratio, int first_power,
                  double* spread) {
  return neville(values, ratio, first_power, spread);
}

double compensated_sum(const std::vector<double>& terms) {
  double sum = 0.0;
  double comp = 0.0;
  for (const double t : terms) {
    const double s = sum + t;
    comp += std::abs(sum) >= std::abs(t) ? (sum - s) + t : (t - s) + sum;
    sum = s;
  }
  return sum + comp;
}

}  // namespace covclt::quad
