#pragma once

#include <functional>
#include <vector>

#include "covclt/common.hpp"

namespace covclt::quad {

/// Nodes and weights of a 1D rule.
struct Rule {
  std::vector<double> x;
  std::vector<double> w;

  size_t size() const { return x.size(); }
  void append(const Rule& other);
};

/// 16-point Gauss-Legendre on each of `panels` equal panels of [a, b].
Rule gauss_panels(double a, double b, int panels);

/// Gauss-Legendre panels on [a, b] clustered towards `a`: panel edges at
/// a + (b - a) (j / panels)^grading.
Rule graded_panels(double a, double b, int panels, double grading);

/// Geometric mesh towards `a`: panels [a + (b - a) s^(k+1), a + (b - a) s^k]
/// for k < layers plus [a, a + (b - a) s^layers]. Exponentially accurate for
/// log and power singularities at `a`; b < a is allowed.
Rule geometric_panels(double a, double b, int layers, double sigma = 0.15);

/// Panels clustered towards both ends of [a, b].
Rule two_sided_graded_panels(double a, double b, int panels, double grading);

/// Adaptive Gauss-Kronrod (7/15) with absolute-or-relative tolerance `tol`.
/// `error` receives the final estimate when non-null.
double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-10,
                 double* error = nullptr);

/// Same over consecutive segments between sorted `breaks`.
double integrate_breaks(const std::function<double(double)>& f, const std::vector<double>& breaks,
                        double tol = 1e-10);

/// Tanh-sinh quadrature for integrands with endpoint singularities. The
/// integrand receives x and the signed distance to the nearer endpoint (negative
/// from the right end), computed without cancellation.
double integrate_endpoint_singular(const std::function<double(double, double)>& f, double a,
                                   double b, double tol = 1e-10, double* error = nullptr);

/// Neville-Richardson extrapolation of values taken at steps h_k = h_0 r^k,
/// assuming an error expansion in integer powers of h starting at `first_power`.
/// `spread` receives the difference between the last two diagonal entries.
Complex richardson(const std::vector<Complex>& values, double ratio, int first_power = 1,
                   double* spread = nullptr);
double richardson(const std::vector<double>& values, double ratio, int first_power = 1,
                  double* spread = nullptr);

/// Sum with Neumaier compensation, in index order.
double compensated_sum(const std::vector<double>& terms);

}  // namespace covclt::quad
