#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "covclt/common.hpp"

namespace covclt::hs {

/// Real test function f with derivative evaluators f^(0) .. f^(k+1) and a
/// compact support [lo, hi]. f is C^k and f^(k+1) is bounded, possibly with
/// jumps; all evaluators return 0 outside the support.
class SmoothTestFunction {
 public:
  /// Fills out[0..upto] with f^(0)(x) .. f^(upto)(x); upto <= k + 1.
  using Evaluator = std::function<void(double x, int upto, double* out)>;

  SmoothTestFunction(std::string name, double lo, double hi, int order, Evaluator eval);

  double operator()(double x) const { return derivative(0, x); }
  double derivative(int l, double x) const;
  void derivatives(double x, int upto, double* out) const;

  const std::string& name() const { return name_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  /// k: derivatives are available up to order k + 1.
  int order() const { return order_; }
  /// Interior points where f^(k+1) may jump (quadrature breakpoints).
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  void set_breakpoints(std::vector<double> b) { breakpoints_ = std::move(b); }

 private:
  std::string name_;
  double lo_;
  double hi_;
  int order_;
  Evaluator eval_;
  std::vector<double> breakpoints_;
};

/// (1 - u^2)^p on (a, b), u = (2x - a - b) / (b - a). C^{p-1}, order k = p - 1.
SmoothTestFunction bump(double a, double b, int p = 4);

/// exp(1 - 1 / (1 - u^2)) on (a, b); infinitely smooth, exposed with order k.
SmoothTestFunction smooth_bump(double a, double b, int order = 8);

/// p(x) h(x), where p has monomial coefficients `coeffs` (constant first) and h
/// is 1 on [a, b], vanishes outside [a - ramp, b + ramp] and is C^8.
SmoothTestFunction poly(const std::vector<double>& coeffs, double a, double b, double ramp = 0.5);

/// Least-squares Chebyshev fit of degree <= 64 to samples on [min x, max x].
/// The fit is exposed with derivatives up to order k + 1 and vanishes outside
/// the sample range, so the samples should decay to 0 at both ends.
SmoothTestFunction chebfit(const std::vector<double>& xs, const std::vector<double>& ys,
                           int degree = 32, int order = 4);

/// Reads "x,f" rows (an optional header line is skipped) and fits them.
SmoothTestFunction chebfit_csv(const std::string& path, int degree = 32, int order = 4);

/// Parses `bump(a,b)`, `bump(a,b,p)`, `smooth_bump(a,b)`,
/// `poly(c0;c1;...,a,b)` or `poly(c0;c1;...,a,b,ramp)`, `chebfit(PATH)`.
SmoothTestFunction parse_test_function(const std::string& spec);

struct ConsistencyReport {
  double max_error = 0.0;
  int worst_order = 0;
  double worst_x = 0.0;
  bool ok = false;
};

/// Central differences of f^(l) against f^(l+1), l = 0..k, at `points`
/// seeded random points inside the support.
ConsistencyReport derivative_consistency(const SmoothTestFunction& f, int points = 50,
                                         double tol = 1e-5, unsigned long long seed = 7);

}  // namespace covclt::hs
