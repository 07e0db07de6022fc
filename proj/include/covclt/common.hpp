#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace covclt {

using Complex = std::complex<double>;
using Index = Eigen::Index;

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;

/// Thrown when a numerical procedure cannot deliver a result at the requested
/// accuracy (non-convergence, proximity to a singularity, unstable limits).
/// The message carries the diagnostic trail.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Collects non-fatal warnings raised while evaluating a quantity.
struct Diagnostics {
  std::vector<std::string> warnings;

  void warn(std::string message) { warnings.push_back(std::move(message)); }
  bool empty() const { return warnings.empty(); }
};

inline void warn(Diagnostics* diag, std::string message) {
  if (diag != nullptr) diag->warn(std::move(message));
}

std::string to_string(Complex z);

}  // namespace covclt
