#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "covclt/clt.hpp"
#include "covclt/common.hpp"
#include "covclt/model.hpp"
#include "covclt/testfn.hpp"

namespace covclt::mc {

enum class EntryKind { RealGaussian, ComplexGaussian, RealRademacher, ComplexRademacher, RealUniform, TwoPoint };

/// Standardized entry law (mean 0, E|X|^2 = 1) with its exact V = E X^2 and
/// kappa = E|X|^4 - |E X^2|^2 - 2.
struct EntryDistribution {
  EntryKind kind = EntryKind::RealGaussian;
  /// Probability of the positive atom for two_point.
  double p = 0.5;

  /// `real_gaussian`, `complex_gaussian`, `real_rademacher`,
  /// `complex_rademacher`, `real_uniform`, `two_point(p)`.
  static EntryDistribution parse(const std::string& name);
  std::string name() const;
  bool is_real() const;
  Complex V() const;
  double kappa() const;
  clt::MomentProfile profile() const { return {V(), kappa()}; }
};

/// All built-in kinds, two_point at p = 0.3.
std::vector<EntryDistribution> all_kinds();

using Rng = std::mt19937_64;

/// Generator for one (seed, experiment, replicate) stream; the key is mixed
/// through splitmix64 so neighbouring replicates get unrelated states.
Rng make_rng(std::uint64_t seed, std::uint64_t experiment = 0, std::uint64_t replicate = 0);

Complex draw(const EntryDistribution& dist, Rng& rng);

/// N x n matrix of i.i.d. entries.
MatrixXcd sample_entries(const EntryDistribution& dist, Index N, Index n, std::uint64_t seed);

struct MomentEstimate {
  Complex mean;
  double second = 0.0;
  Complex V;
  double kappa = 0.0;
};

MomentEstimate estimate_moments(const EntryDistribution& dist, Index count, std::uint64_t seed);

struct IdentityCheck {
  /// Monte-Carlo mean of (X^*AX - tr A)(X^*BX - tr B).
  double lhs = 0.0;
  /// tr AB + |V|^2 tr AB^T + kappa sum_i A_ii B_ii
  double rhs = 0.0;
  double standard_error = 0.0;
  double relative_error = 0.0;
};

/// A, B Hermitian N x N with N <= 50.
IdentityCheck covariance_identity_check(const EntryDistribution& dist, const MatrixXcd& a,
                                        const MatrixXcd& b, Index samples, std::uint64_t seed);

struct ExperimentSpec {
  EntryDistribution dist;
  std::vector<hs::SmoothTestFunction> functions;
  std::vector<Complex> z;
  Index replicates = 100;
  std::uint64_t seed = 1;
  std::uint64_t experiment = 0;
  int threads = 1;
  bool keep_eigenvalues = false;
};

struct ReplicateResult {
  Index index = 0;
  /// Sorted ascending; empty unless keep_eigenvalues.
  VectorXd eigenvalues;
  double lambda_max = 0.0;
  /// L_n(f) = sum_i f(lambda_i) - N \int f dF_n, one per function.
  VectorXd L;
  /// M_n(z) = tr Q(z) - N t_n(z), one per z.
  VectorXcd M;
};

struct ExperimentResult {
  std::vector<ReplicateResult> replicates;
  std::vector<Index> dropped;
  std::vector<std::string> log;
  /// N \int f dF_n per function.
  VectorXd centers;
  /// t_n(z) per z.
  VectorXcd t;

  double drop_rate() const;
  /// Column of L values (or Re/Im of M values) across kept replicates.
  std::vector<double> L_column(Index f) const;
  std::vector<Complex> M_column(Index z) const;
};

/// Replicates of Sigma = n^{-1/2} R^{1/2} X with the Hermitian spectrum of
/// Sigma Sigma^*. Results are ordered by replicate index and do not depend
/// on the thread count.
ExperimentResult run_experiment(const PopulationModel& model, const ExperimentSpec& spec);

struct EmpiricalSummary {
  Index count = 0;
  double mean = 0.0;
  double variance = 0.0;
  double standard_error = 0.0;
  double predicted_mean = 0.0;
  double predicted_variance = 0.0;
  double variance_ratio = 0.0;
  /// sup |F_emp - Phi| of (x - predicted_mean) / sqrt(predicted_variance).
  double ks_statistic = 0.0;
  /// 1.36 / sqrt(count)
  double ks_critical = 0.0;
  /// |mean - predicted_mean| / standard_error
  double mean_z = 0.0;
};

/// Needs count >= 500 (invalid_argument otherwise) and a positive predicted variance.
EmpiricalSummary compare_to_gaussian(const std::vector<double>& samples, double predicted_mean,
                                     double predicted_variance, Index min_count = 500);

/// Mean and unbiased variance.
std::pair<double, double> mean_variance(const std::vector<double>& x);

/// Kolmogorov-Smirnov distance of the sample to N(0, 1).
double ks_standard_normal(std::vector<double> u);

}  // namespace covclt::mc
