#include <gtest/gtest.h>

#include <random>

#include "covclt/deteq.hpp"
#include "test_models.hpp"

using namespace covclt;
using deteq::solve_canonical;

namespace {

double rel(Complex a, Complex b) { return std::abs(a - b) / std::abs(b); }

// Stieltjes transform of the MP law, c = 0.5, by direct quadrature of the
// density (tests/oracles/oracles.py).
struct Frozen {
  Complex z;
  Complex t;
};
const Frozen kMpHalf[] = {
    {{1.0, 0.05}, {-0.45404994896597567, 1.296657391260259}},
    {{2.5, 0.3}, {-0.6422190456562968, 0.38919836412624653}},
    {{-1.0, 1.0}, {0.4055535494917011, 0.24077240675752182}},
    {{0.2, 0.01}, {1.5164251937588062, 2.6609512061549054}},
};

// Limit law for F^R = (delta_1 + delta_3) / 2 at c = 1, from the roots of the
// cubic satisfied by the companion transform.
const Frozen kTwoAtom[] = {
    {{0.307767464582, 0.1}, {-0.166507258394881, 1.331278133936737}},
    {{2.0, 0.01}, {-0.29776971839732097, 0.3710766568836163}},
    {{5.0, 0.5}, {-0.20027587731388716, 0.16713863769666243}},
};

}  // namespace

TEST(Deteq, MatchesMpQuadratureOracle) {
  const auto m = PopulationModel::identity(100, 200);
  for (const auto& p : kMpHalf) {
    EXPECT_LT(rel(solve_canonical(m, p.z).t, p.t), 1e-9) << to_string(p.z);
    EXPECT_LT(rel(deteq::mp_closed_form(0.5, p.z), p.t), 1e-9) << to_string(p.z);
  }
}

TEST(Deteq, MatchesMpClosedFormOnGrid) {
  for (double c : {0.25, 1.0, 2.0}) {
    const auto m = PopulationModel::identity(static_cast<Index>(100 * c), 100);
    for (int i = 0; i < 10; ++i) {
      for (int j = 0; j < 10; ++j) {
        const Complex z(-0.5 + 6.0 * i / 9.0, 0.05 + 0.95 * j / 9.0);
        EXPECT_LT(rel(solve_canonical(m, z).t, deteq::mp_closed_form(c, z)), 1e-10) << c << " " << to_string(z);
      }
    }
  }
}

TEST(Deteq, TwoAtomMatchesPolynomialRoots) {
  const auto m = PopulationModel::two_atom(1.0, 3.0, 0.5, 200, 200);
  for (const auto& p : kTwoAtom) EXPECT_LT(rel(solve_canonical(m, p.z).t, p.t), 1e-10) << to_string(p.z);
}

TEST(Deteq, StieltjesClassAndLinearRelation) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> re(-2.0, 8.0), im(1e-3, 2.0);
  for (const auto& model : test_models::all(40, 60)) {
    const double c = model.c();
    for (int i = 0; i < 40; ++i) {
      const Complex z(re(rng), im(rng));
      const auto st = solve_canonical(model, z);
      EXPECT_GT(st.t.imag(), 0.0);
      EXPECT_GT(st.t_tilde.imag(), 0.0);
      const double dist = z.real() >= 0.0 ? z.imag() : std::abs(z);
      EXPECT_LE(std::abs(st.t), 1.0 / dist * (1.0 + 1e-12));
      const double scale = std::max({std::abs(st.t_tilde), std::abs((1.0 - c) / z), c * std::abs(st.t)});
      EXPECT_LT(std::abs(st.t_tilde - (-(1.0 - c) / z + c * st.t)), 1e-14 * scale);
      EXPECT_LT(st.residual, 1e-13);
    }
  }
}

TEST(Deteq, TraceOfEquivalentIsT) {
  for (const auto& model : test_models::all(30, 50)) {
    for (Complex z : {Complex(0.5, 0.1), Complex(3.0, 0.02), Complex(-1.0, 0.5)}) {
      const auto st = solve_canonical(model, z);
      const auto eq = deteq::build_resolvent_equivalent(model, st);
      EXPECT_LT(std::abs(eq.T.trace() / static_cast<double>(model.N()) - st.t), 1e-12);
      EXPECT_LT((eq.T_transpose - eq.T.transpose()).norm(), 1e-12 * eq.T.norm());
    }
  }
}

TEST(Deteq, DeterminantIdentity) {
  for (const auto& model : test_models::all(30, 40)) {
    for (Complex z : {Complex(0.3, 0.05), Complex(1.7, 0.2), Complex(4.0, 1.0), Complex(-0.4, 0.05)}) {
      EXPECT_LT(deteq::determinant_identity(model, z).relative_error, 1e-8) << to_string(z);
    }
  }
}

TEST(Deteq, ResolventScaling) {
  const auto base = PopulationModel::two_atom(0.5, 2.0, 0.3, 50, 80);
  for (double alpha : {0.25, 3.0}) {
    const PopulationModel scaled(base.eigenvalues() * alpha, base.n());
    for (Complex z : {Complex(1.0, 0.1), Complex(-2.0, 0.7)}) {
      const Complex lhs = solve_canonical(scaled, z).t;
      const Complex rhs = solve_canonical(base, z / alpha).t / alpha;
      EXPECT_LT(rel(lhs, rhs), 1e-12);
    }
  }
}

TEST(Deteq, LowerHalfPlaneIsConjugate) {
  const auto m = PopulationModel::geometric(0.9, 30, 40);
  const Complex z(1.3, 0.2);
  EXPECT_LT(std::abs(solve_canonical(m, std::conj(z)).t - std::conj(solve_canonical(m, z).t)), 1e-14);
}

TEST(Deteq, NegativeRealAxisIsReal) {
  const auto st = solve_canonical(PopulationModel::identity(100, 100), Complex(-1.0, 0.0));
  EXPECT_NEAR(st.t.real(), (std::sqrt(5.0) - 1.0) / 2.0, 1e-13);
  EXPECT_EQ(st.t.imag(), 0.0);
}

TEST(Deteq, RejectsPositiveRealAxis) {
  const auto m = PopulationModel::identity(10, 10);
  EXPECT_THROW(solve_canonical(m, Complex(1.0, 0.0)), std::invalid_argument);
  EXPECT_THROW(solve_canonical(m, Complex(0.0, 0.0)), std::invalid_argument);
  EXPECT_THROW(solve_canonical(m, Complex(1.0, 0.1), {.tol = 0.0}), std::invalid_argument);
}

TEST(Deteq, ZeroPopulationGivesFreeResolvent) {
  const PopulationModel zero(VectorXd::Zero(20), 30);
  const Complex z(0.7, 0.4);
  EXPECT_LT(std::abs(solve_canonical(zero, z).t + 1.0 / z), 1e-15);
}

TEST(Deteq, DerivativeMatchesContour) {
  for (const auto& model : test_models::all(30, 50)) {
    const auto atoms = deteq::WeightedAtoms::from_model(model);
    for (Complex z : {Complex(1.0, 0.3), Complex(-0.5, 0.2)}) {
      const auto st = solve_canonical(atoms, z);
      EXPECT_LT(rel(deteq::t_tilde_derivative(atoms, st), deteq::t_tilde_derivative_cauchy(atoms, z)), 1e-9);
    }
  }
}

TEST(Deteq, BoundaryValueGivesMpDensity) {
  const auto m = PopulationModel::identity(100, 200);
  for (double x : {0.2, 1.0, 2.5}) {
    const auto bv = deteq::boundary_value(m, x);
    EXPECT_TRUE(bv.stable);
    const Complex exact = deteq::mp_closed_form(0.5, Complex(x, 1e-300));
    EXPECT_LT(rel(bv.t, exact), 1e-10) << x;
  }
  // Outside the support the boundary value is real.
  EXPECT_LT(std::abs(deteq::boundary_value(m, 4.0).t.imag()), 1e-10);
}

TEST(Deteq, SupportOfMpLaw) {
  for (double c : {0.5, 2.0}) {
    const auto atoms = deteq::WeightedAtoms::from_measure(VectorXd::Ones(1), VectorXd::Ones(1), c);
    const auto sup = deteq::density_and_support(atoms, deteq::default_support_grid(atoms));
    ASSERT_EQ(sup.support_intervals.size(), 1u);
    const double sc = std::sqrt(c);
    EXPECT_NEAR(sup.support_intervals[0].first, (1 - sc) * (1 - sc), 1e-4);
    EXPECT_NEAR(sup.support_intervals[0].second, (1 + sc) * (1 + sc), 1e-5);
    const double atom = c > 1.0 ? 1.0 - 1.0 / c : 0.0;
    EXPECT_NEAR(sup.atom_at_zero, atom, 1e-12);
    EXPECT_NEAR(sup.mass + atom, 1.0, 2e-3);
  }
}

TEST(Deteq, TwoAtomSupportSplits) {
  // Well separated atoms at small c give two bulks.
  const auto atoms = deteq::WeightedAtoms::from_measure((VectorXd(2) << 1.0, 10.0).finished(),
                                                        (VectorXd(2) << 0.5, 0.5).finished(), 0.05);
  const auto sup = deteq::density_and_support(atoms, deteq::default_support_grid(atoms));
  EXPECT_EQ(sup.support_intervals.size(), 2u);
}
