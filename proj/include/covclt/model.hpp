#pragma once

#include <optional>
#include <string>

#include "covclt/common.hpp"

namespace covclt {

/// Distinct eigenvalues of the population covariance together with the
/// eigenvector overlap couplings needed by the covariance and bias kernels.
///
/// With Q(i, a) = sum over eigen-indices k of atom a of |U(i, k)|^2 and
/// W = U^* conj(U):
///   - diagonal_overlap(a, b)  = sum_i Q(i, a) Q(i, b)
///   - transpose_overlap(a, b) = sum over k in a, l in b of |W(k, l)|^2
/// Both reduce to diag(multiplicity) when R is diagonal, and the transpose
/// overlap does so whenever R has real entries.
struct SpectralAtoms {
  VectorXd value;
  VectorXd multiplicity;
  MatrixXd diagonal_overlap;
  MatrixXd transpose_overlap;
  /// Q(i, a), N x K. Empty when R is diagonal in the canonical basis.
  MatrixXd row_weight;

  Index size() const { return value.size(); }
};

/// Population covariance R = U diag(eigenvalues) U^* together with the
/// dimensions N (rows of the data matrix) and n (samples).
class PopulationModel {
 public:
  /// Diagonal R.
  PopulationModel(VectorXd eigenvalues, Index n);
  /// General Hermitian R; the columns of `eigenvectors` must be orthonormal.
  PopulationModel(VectorXd eigenvalues, MatrixXcd eigenvectors, Index n);

  /// Eigen-decomposes a Hermitian nonnegative matrix once.
  static PopulationModel from_matrix(const MatrixXcd& r, Index n);

  static PopulationModel identity(Index N, Index n);
  /// N*w eigenvalues equal to a, the rest equal to b (w rounded to a count).
  static PopulationModel two_atom(double a, double b, double w, Index N, Index n);
  /// Eigenvalues r^0, r^1, ..., r^{N-1}.
  static PopulationModel geometric(double r, Index N, Index n);

  Index N() const { return eigenvalues_.size(); }
  Index n() const { return n_; }
  double c() const { return static_cast<double>(N()) / static_cast<double>(n_); }

  const VectorXd& eigenvalues() const { return eigenvalues_; }
  bool has_eigenvectors() const { return eigenvectors_.has_value(); }
  /// Identity when R is diagonal.
  MatrixXcd eigenvectors() const;
  bool is_real() const { return is_real_; }
  bool is_diagonal() const { return !eigenvectors_.has_value(); }

  double spectral_norm() const;
  /// lambda_max(R) * (1 + sqrt(c))^2, an upper bound for the limiting support.
  double support_bound() const;
  /// Mass of the limiting spectral measure at zero.
  double atom_at_zero() const;

  const SpectralAtoms& atoms() const { return atoms_; }

  /// R itself, assembled from the eigen-decomposition.
  MatrixXcd matrix() const;
  /// R^{1/2} in the eigenbasis.
  MatrixXcd sqrt_matrix() const;

 private:
  void validate() const;
  void build_atoms();

  VectorXd eigenvalues_;
  std::optional<MatrixXcd> eigenvectors_;
  Index n_ = 1;
  bool is_real_ = true;
  SpectralAtoms atoms_;
};

/// Parses population descriptors used by the CLI and config files:
/// `identity`, `two_atom(a,b,w)`, `geometric(r)`, `inline:l1,l2,...`, `file:PATH`.
/// For `file:` the file's own N and n take precedence over the arguments.
PopulationModel parse_population(const std::string& descriptor, Index N, Index n);

/// Reads the JSON model file: keys `eigenvalues`, optional `eigenvectors`
/// (row-major, entries as [re, im] pairs), `N`, `n`.
PopulationModel load_model_file(const std::string& path);
void save_model_file(const PopulationModel& model, const std::string& path);

}  // namespace covclt
