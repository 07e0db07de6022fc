#include <gtest/gtest.h>

#include <random>

#include "covclt/mc.hpp"
#include "test_models.hpp"

using namespace covclt;
using namespace covclt::mc;

namespace {

MatrixXcd random_psd(Index n, unsigned seed, bool real) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  MatrixXcd a(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = real ? Complex(g(rng), 0.0) : Complex(g(rng), g(rng));
  return a * a.adjoint() / static_cast<double>(n);
}

ExperimentSpec spec_for(const std::string& dist, Index replicates, std::vector<hs::SmoothTestFunction> fs,
                        std::vector<Complex> z = {}) {
  ExperimentSpec s;
  s.dist = EntryDistribution::parse(dist);
  s.functions = std::move(fs);
  s.z = std::move(z);
  s.replicates = replicates;
  s.seed = 17;
  return s;
}

}  // namespace

TEST(Sampler, NamesRoundTrip) {
  for (const auto& d : all_kinds()) EXPECT_EQ(EntryDistribution::parse(d.name()).name(), d.name());
  EXPECT_THROW(EntryDistribution::parse("cauchy"), std::invalid_argument);
  EXPECT_THROW(EntryDistribution::parse("two_point(1.5)"), std::invalid_argument);
}

TEST(Sampler, MomentsMatchDeclaredProfile) {
  for (const auto& d : all_kinds()) {
    const auto est = estimate_moments(d, 400000, 3);
    EXPECT_LT(std::abs(est.mean), 0.01) << d.name();
    EXPECT_NEAR(est.second, 1.0, 0.01) << d.name();
    EXPECT_LT(std::abs(est.V - d.V()), 0.01) << d.name();
    EXPECT_NEAR(est.kappa, d.kappa(), 0.05 * std::max(1.0, std::abs(d.kappa()))) << d.name();
  }
}

TEST(Sampler, KnownCumulants) {
  EXPECT_EQ(EntryDistribution::parse("real_gaussian").kappa(), 0.0);
  EXPECT_EQ(EntryDistribution::parse("complex_gaussian").kappa(), 0.0);
  EXPECT_DOUBLE_EQ(EntryDistribution::parse("real_rademacher").kappa(), -2.0);
  EXPECT_DOUBLE_EQ(EntryDistribution::parse("complex_rademacher").kappa(), -1.0);
  EXPECT_DOUBLE_EQ(EntryDistribution::parse("real_uniform").kappa(), -1.2);
  EXPECT_EQ(EntryDistribution::parse("complex_gaussian").V(), Complex(0.0, 0.0));
}

TEST(Sampler, StreamsAreKeyed) {
  auto a = make_rng(1, 0, 0), b = make_rng(1, 0, 0), c = make_rng(1, 0, 1), d = make_rng(1, 1, 0);
  const auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
  EXPECT_NE(x, d());
}

TEST(Sampler, CovarianceIdentity) {
  for (const auto& d : all_kinds()) {
    const MatrixXcd a = random_psd(8, 1, false);
    const MatrixXcd b = random_psd(8, 2, false);
    const auto r = covariance_identity_check(d, a, b, 100000, 9);
    EXPECT_LT(std::abs(r.lhs - r.rhs), 5.0 * r.standard_error + 1e-12) << d.name();
  }
}

TEST(Experiment, ReproducibleAcrossThreadCounts) {
  const auto m = PopulationModel::two_atom(1.0, 2.0, 0.5, 30, 40);
  auto s = spec_for("real_rademacher", 40, {hs::bump(0.2, 5.0)}, {Complex(1.0, 0.5)});
  const auto r1 = run_experiment(m, s);
  s.threads = 3;
  const auto r2 = run_experiment(m, s);
  ASSERT_EQ(r1.replicates.size(), r2.replicates.size());
  for (size_t i = 0; i < r1.replicates.size(); ++i) {
    EXPECT_EQ(r1.replicates[i].L(0), r2.replicates[i].L(0));
    EXPECT_EQ(r1.replicates[i].M(0), r2.replicates[i].M(0));
    EXPECT_EQ(r1.replicates[i].lambda_max, r2.replicates[i].lambda_max);
  }
  s.seed = 18;
  EXPECT_NE(run_experiment(m, s).replicates[0].L(0), r1.replicates[0].L(0));
}

TEST(Experiment, ResolventStatisticIsConjugateSymmetric) {
  const Complex z(1.5, 0.3);
  const auto r = run_experiment(test_models::random_complex(20, 30),
                                spec_for("complex_gaussian", 20, {}, {z, std::conj(z)}));
  for (const auto& rep : r.replicates) EXPECT_LT(std::abs(rep.M(1) - std::conj(rep.M(0))), 1e-12);
}

TEST(Experiment, WishartMomentsAreExact) {
  // For R = I: E L(x^2) = c (kappa + |V|^2) and Var L(x) = c (1 + |V|^2 + kappa),
  // both exact at finite N.
  const Index N = 40, n = 50;
  const double c = static_cast<double>(N) / static_cast<double>(n);
  const auto m = PopulationModel::identity(N, n);
  for (const std::string name : {"real_gaussian", "complex_gaussian", "real_rademacher", "real_uniform"}) {
    auto s = spec_for(name, 4000, {hs::poly({0.0, 1.0}, -0.5, 8.0), hs::poly({0.0, 0.0, 1.0}, -0.5, 8.0)});
    const auto r = run_experiment(m, s);
    const auto d = s.dist;
    const auto [m1, v1] = mean_variance(r.L_column(0));
    const auto [m2, v2] = mean_variance(r.L_column(1));
    const double count = static_cast<double>(r.replicates.size());
    const double var_x = c * (1.0 + std::norm(d.V()) + d.kappa());
    EXPECT_LT(std::abs(m2 - c * (d.kappa() + std::norm(d.V()))), 4.0 * std::sqrt(v2 / count)) << name;
    // The additive term covers the quadrature error of the centering N * int x dmu = N.
    EXPECT_LT(std::abs(m1), 4.0 * std::sqrt(var_x / count) + 1e-7) << name;
    // The variance estimate has relative sd about sqrt(2 / count) for light tails.
    if (var_x > 0.0) EXPECT_NEAR(v1 / var_x, 1.0, 0.12) << name;
  }
}

TEST(Experiment, LargestEigenvalueNearEdge) {
  const auto m = PopulationModel::two_atom(1.0, 2.0, 0.5, 400, 400);
  auto s = spec_for("real_gaussian", 100, {});
  s.threads = 2;
  const auto r = run_experiment(m, s);
  const double bound = m.support_bound() + 0.2;
  Index inside = 0;
  for (const auto& rep : r.replicates) inside += rep.lambda_max <= bound ? 1 : 0;
  EXPECT_GE(static_cast<double>(inside), 0.99 * static_cast<double>(r.replicates.size()));
}

TEST(Experiment, ResolventVarianceEnvelope) {
  // C fitted on a coarse grid of Im z bounds the variance at the points in between.
  const auto m = PopulationModel::identity(60, 60);
  const std::vector<double> coarse = {0.1, 0.3, 1.0};
  const std::vector<double> fine = {0.15, 0.2, 0.5, 0.7};
  std::vector<Complex> zs;
  for (double y : coarse) zs.emplace_back(2.0, y);
  for (double y : fine) zs.emplace_back(2.0, y);
  const auto r = run_experiment(m, spec_for("real_gaussian", 400, {}, zs));
  auto variance = [&](size_t i) {
    double v = 0.0;
    for (Complex x : r.M_column(static_cast<Index>(i))) v += std::norm(x);
    return v / static_cast<double>(r.replicates.size());
  };
  double C = 0.0;
  for (size_t i = 0; i < coarse.size(); ++i) C = std::max(C, variance(i) * std::pow(coarse[i], 4));
  ASSERT_GT(C, 0.0);
  for (size_t i = 0; i < fine.size(); ++i) {
    EXPECT_LE(variance(coarse.size() + i), 1.1 * C / std::pow(fine[i], 4)) << fine[i];
  }
}

TEST(Summary, KolmogorovSmirnovOnNormalSample) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(1.0, 2.0);
  std::vector<double> x(2000);
  for (double& v : x) v = g(rng);
  const auto s = compare_to_gaussian(x, 1.0, 4.0);
  EXPECT_LT(s.ks_statistic, s.ks_critical);
  EXPECT_NEAR(s.variance_ratio, 1.0, 0.1);
  EXPECT_LT(s.mean_z, 3.0);
  EXPECT_THROW(compare_to_gaussian(std::vector<double>(10, 0.0), 0.0, 1.0), std::invalid_argument);
  // A shifted sample is rejected.
  for (double& v : x) v += 1.0;
  EXPECT_GT(compare_to_gaussian(x, 1.0, 4.0).ks_statistic, 0.1);
}
