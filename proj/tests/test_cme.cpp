#include "gapsol/bloch.hpp"
#include "gapsol/cme.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace gapsol;

namespace {

const Lattice kSquare = Lattice::square(2 * kPi);

// Omega A + 1/2 Laplace A + I |A|^2 A with a unit Hessian.
CmeSystem normalized(double coupling) {
  CmeSystem s;
  s.N = 1;
  s.Omega = -1;
  s.H = {Mat2::Identity()};
  s.kpoints = {Vec2::Zero()};
  s.sigma = {{{0, 0, 0}}};
  s.I = {{cdouble(coupling, 0.0)}};
  return s;
}

// Two-component system on {k, -k} with cross coupling.
CmeSystem pair_system() {
  CmeSystem s;
  s.N = 2;
  s.Omega = 1;
  s.H = {Mat2::Identity() * -1.0, Mat2::Identity() * -1.0};
  s.kpoints = {Vec2(0.3, 0.1), Vec2(-0.3, -0.1)};
  s.sigma = resonance_sets(s.kpoints, kSquare);
  s.I.resize(2);
  for (int j = 0; j < 2; ++j)
    for (size_t t = 0; t < s.sigma[j].size(); ++t) s.I[j].push_back(cdouble(0.7 + 0.1 * t, 0.0));
  return s;
}

EnvelopeState random_state(int N, int M, double L, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  EnvelopeState s(N, M, L);
  for (auto& a : s.A)
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = cdouble(nd(rng), nd(rng));
  return s;
}

Eigen::VectorXcd residual_flat(const CmeSystem& sys, const EnvelopeState& A) { return flatten(cme_residual(sys, A)); }

}  // namespace

TEST(ResonanceSets, SinglePointIsSelfResonant) {
  const auto s = resonance_sets({Vec2::Zero()}, kSquare);
  ASSERT_EQ(s.size(), 1u);
  ASSERT_EQ(s[0].size(), 1u);
  EXPECT_EQ(s[0][0], (Triple{0, 0, 0}));
}

TEST(ResonanceSets, OppositePairHasThreeTriples) {
  const auto s = resonance_sets({Vec2(0.3, 0.1), Vec2(-0.3, -0.1)}, kSquare);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].size(), 3u);
  EXPECT_EQ(s[1].size(), 3u);
  for (int j = 0; j < 2; ++j)
    for (const auto& t : s[j]) {
      const Vec2 k[2] = {Vec2(0.3, 0.1), Vec2(-0.3, -0.1)};
      EXPECT_TRUE(kSquare.is_reciprocal_vector(k[t[0]] + k[t[1]] - k[t[2]] - k[j], 1e-12));
    }
}

TEST(ResonanceSets, ReciprocalShiftsCount) {
  // X and -X differ by b1, so every triple is resonant
  const Vec2 X = 0.5 * kSquare.b1();
  const auto s = resonance_sets({X, -X}, kSquare);
  EXPECT_EQ(s[0].size(), 8u);
}

TEST(Residual, LinearSymbolOnPlaneWave) {
  const CmeSystem sys = normalized(0.0);
  EnvelopeState A(1, 16, kPi);
  for (int i2 = 0; i2 < 16; ++i2)
    for (int i1 = 0; i1 < 16; ++i1) A.A[0](i1, i2) = std::polar(1.0, 2.0 * A.y(i1) + A.y(i2));
  const auto G = cme_residual(sys, A);
  // (Omega - |xi|^2/2) with xi = (2, 1)
  EXPECT_LT((G[0] - (-1.0 - 2.5) * A.A[0]).abs().maxCoeff(), 1e-12);
}

// Forward differences of G approach J d at first order.
TEST(Jacobian, FiniteDifferenceSlope) {
  const CmeSystem sys = pair_system();
  const EnvelopeState A = random_state(2, 16, 3.0, 11);
  const EnvelopeState dstate = random_state(2, 16, 3.0, 12);
  const Eigen::VectorXcd d = dstate.flat();
  const CmeJacobian J(sys, A);
  const Eigen::VectorXcd Jd = J.apply(d);
  const Eigen::VectorXcd G0 = residual_flat(sys, A);
  std::vector<double> ts{1e-3, 1e-4, 1e-5}, errs;
  for (double t : ts) {
    const Eigen::VectorXcd Gt = residual_flat(sys, A.with_flat(A.flat() + t * d));
    errs.push_back(((Gt - G0) / t - Jd).norm() / Jd.norm());
  }
  for (size_t i = 1; i < errs.size(); ++i) EXPECT_LT(errs[i], errs[i - 1]);
  const double slope = std::log(errs.front() / errs.back()) / std::log(ts.front() / ts.back());
  EXPECT_NEAR(slope, 1.0, 0.1);
}

TEST(Jacobian, TransposeIsRealAdjoint) {
  const CmeSystem sys = pair_system();
  const EnvelopeState A = random_state(2, 12, 2.0, 3);
  const CmeJacobian J(sys, A);
  const Eigen::VectorXcd u = random_state(2, 12, 2.0, 4).flat(), v = random_state(2, 12, 2.0, 5).flat();
  const double lhs = rdot(J.apply(u), v), rhs = rdot(u, J.apply_transpose(v));
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
}

TEST(Jacobian, LinearInverseUndoesSymbol) {
  const CmeSystem sys = normalized(0.0);
  const EnvelopeState A = random_state(1, 12, 2.0, 8);
  const CmeJacobian J(sys, A);
  const Eigen::VectorXcd v = random_state(1, 12, 2.0, 9).flat();
  EXPECT_LT((J.apply_linear_inverse(J.apply(v)) - v).norm(), 1e-12 * v.norm());
}

TEST(Jacobian, NonlinearBlockMatchesApply) {
  const CmeSystem sys = normalized(1.0);
  const EnvelopeState A = random_state(1, 8, 2.0, 21);
  const CmeJacobian J(sys, A);
  const auto blk = J.nonlinear_block(0, 0);
  EnvelopeState e(1, 8, 2.0);
  e.A[0].setConstant(cdouble(1.0, 0.0));
  const Eigen::VectorXcd lin = J.apply(e.flat()) - flatten({apply_symbol(J.symbols()[0], e.A[0])});
  const Eigen::Map<const Eigen::ArrayXcd> l(lin.data(), lin.size());
  EXPECT_LT((l.real() - Eigen::Map<const Eigen::ArrayXd>(blk[0].data(), blk[0].size())).abs().maxCoeff(), 1e-12);
  EXPECT_LT((l.imag() - Eigen::Map<const Eigen::ArrayXd>(blk[2].data(), blk[2].size())).abs().maxCoeff(), 1e-12);
}

TEST(Newton, FocusingNormalizedSystemIsNondegenerate) {
  const CmeSystem sys = normalized(1.0);
  const EnvelopeState A0 = gaussian_guess(sys, 64, 6.0, 2.2);
  NewtonReport rep;
  const EnvelopeState A = solve_newton(sys, A0, {}, &rep);
  EXPECT_FALSE(A.trivial);
  EXPECT_LT(envelope_norm(cme_residual(sys, A), A.h()), 1e-10);
  EXPECT_LT(A.pt_defect(), 1e-10);
  EXPECT_GT(A.max_abs(), 1.0);
  const NondegeneracyReport nd = nondegeneracy_check(sys, A);
  EXPECT_EQ(nd.null_count, 3);
  EXPECT_LT(nd.subspace_angle, 1e-3);
  EXPECT_FALSE(nd.degenerate);
  EXPECT_GT(nd.pt_min_singular, nd.null_tol);
}

// With Omega = -1 and a negative coupling every term of the energy identity
// has the same sign, so the zero state is the only solution.
TEST(Newton, DefocusingNormalizedSystemCollapses) {
  const CmeSystem sys = normalized(-1.0);
  const EnvelopeState A = solve_newton(sys, gaussian_guess(sys, 64, 6.0, 2.2));
  EXPECT_TRUE(A.trivial);
  const NondegeneracyReport nd = nondegeneracy_check(sys, A);
  EXPECT_TRUE(nd.not_applicable);
}

TEST(Newton, GuessIsPtSymmetricAndLocalized) {
  const CmeSystem sys = pair_system();
  const EnvelopeState g = gaussian_guess(sys, 32, 6.0, 1.0, {1.0, 0.5});
  EXPECT_EQ(g.pt_defect(), 0.0);
  EXPECT_LT(g.boundary_ratio(), 1e-6);
  EXPECT_NEAR(g.A[1].abs().maxCoeff() / g.A[0].abs().maxCoeff(), 0.5, 1e-12);
}

TEST(EnvelopeState, RejectsBadShapes) {
  EXPECT_THROW(EnvelopeState(1, 2, 1.0), std::invalid_argument);
  EXPECT_THROW(EnvelopeState(1, 8, 0.0), std::invalid_argument);
  EXPECT_THROW(cme_residual(pair_system(), EnvelopeState(1, 8, 1.0)), std::invalid_argument);
}

TEST(Reduction, SymmetricSubspaceIsInvariant) {
  CmeSystem sys = pair_system();
  // equal couplings across components make A_0 = A_1 invariant
  for (auto& row : sys.I)
    for (auto& c : row) c = 0.8;
  EXPECT_LT(reduction_defect(sys, {}, {{1, 0}}), 1e-12);
}

// Orbit of four points where products like u_0 u_2 conj(u_1 u_3) resonate.
TEST(Coupling, RealOnEvenMedium) {
  const Medium m = Medium::harmonic(kSquare, 2.0, {{1, 0, 1.0, 0.0}, {0, 1, 0.5, 0.0}, {1, 1, 0.3, 0.0}});
  const BlochSolver s(m, 1.0, 3);
  std::vector<BlochEigenpair> pairs;
  std::vector<Vec2> ks;
  for (const auto& [a, b] : {std::pair{0.25, 0.25}, {-0.25, 0.25}, {-0.25, -0.25}, {0.25, -0.25}}) {
    pairs.push_back(fix_phase(s.eigenpairs(a * kSquare.b1() + b * kSquare.b2(), 1)[0]));
    ASSERT_TRUE(pairs.back().phase_reliable);
    ks.push_back(pairs.back().k);
  }
  const auto sigma = resonance_sets(ks, kSquare);
  EXPECT_GT(sigma[0].size(), 7u);
  const int n1 = pairs[0].p.n1(), n2 = pairs[0].p.n2();
  const auto I = coupling_coefficients(pairs, sigma, m.chi_field(n1, n2), pairs[0].omega, kSquare);
  double imag = 0.0, mag = 0.0;
  for (const auto& row : I)
    for (const auto& c : row) {
      imag = std::max(imag, std::abs(c.imag()));
      mag = std::max(mag, std::abs(c));
    }
  EXPECT_GT(mag, 0.0);
  EXPECT_LT(imag, 1e-8 * mag);
}

TEST(Coupling, RejectsMismatchedChiGrid) {
  const Medium m = Medium::harmonic(kSquare, 2.0, {{1, 0, 1.0, 0.0}});
  const BlochSolver s(m, 1.0, 2);
  const std::vector<BlochEigenpair> pairs{fix_phase(s.eigenpairs(Vec2::Zero(), 1)[0])};
  const int n1 = pairs[0].p.n1();
  EXPECT_THROW(coupling_coefficients(pairs, {{{0, 0, 0}}}, m.chi_field(n1 + 2, n1 + 2), 1.0, kSquare), std::invalid_argument);
}
