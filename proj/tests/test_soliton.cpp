#include "gapsol/bloch.hpp"
#include "gapsol/soliton.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace gapsol;

namespace {

const Lattice kSquare = Lattice::square(2 * kPi);
const Lattice kHex = Lattice::hexagonal(1.0);

Eigen::ArrayXXcd random_array(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::ArrayXXcd a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = cdouble(nd(rng), nd(rng));
  return a;
}

double cell_sum(const std::vector<Eigen::ArrayXXcd>& t) {
  double s = 0.0;
  for (const auto& a : t) s += a.abs2().sum();
  return s;
}

double max_diff(const std::vector<Eigen::ArrayXXcd>& a, const std::vector<Eigen::ArrayXXcd>& b) {
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d = std::max(d, (a[i] - b[i]).abs().maxCoeff());
  return d;
}

double max_abs(const std::vector<Eigen::ArrayXXcd>& a) {
  double d = 0.0;
  for (const auto& x : a) d = std::max(d, x.abs().maxCoeff());
  return d;
}

VectorField random_field(int n, std::mt19937_64& rng) {
  VectorField f(n, n);
  for (int a = 0; a < 3; ++a) f[a] = random_array(n, rng);
  return f;
}

}  // namespace

class BlochTransformSuite : public ::testing::TestWithParam<int> {};

TEST_P(BlochTransformSuite, IdentitiesOnRandomFields) {
  const Lattice lat = GetParam() == 0 ? kSquare : kHex;
  const BlochTransform T(lat, 3, 5);
  const int n = 15;
  std::mt19937_64 rng(100 + GetParam());
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::ArrayXXcd u = random_array(n, rng), v = random_array(n, rng);
    const auto tu = T.forward(u), tv = T.forward(v);
    // round trip
    EXPECT_LT((T.inverse(tu) - u).abs().maxCoeff(), 1e-12 * u.abs().maxCoeff());
    // Parseval
    EXPECT_NEAR(u.abs2().sum(), T.weight() * cell_sum(tu), 1e-10 * u.abs2().sum());
    // convolution: transform of a product
    const auto tuv = T.forward(Eigen::ArrayXXcd(u * v));
    EXPECT_LT(max_diff(T.convolve(tu, tv), tuv), 1e-10 * max_abs(tuv));
    // periodic multiplier acts pointwise
    const Eigen::ArrayXXcd P = random_array(5, rng);
    Eigen::ArrayXXcd Pu(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) Pu(i, j) = P(i % 5, j % 5) * u(i, j);
    const auto tPu = T.forward(Pu);
    std::vector<Eigen::ArrayXXcd> Ptu;
    for (const auto& a : tu) Ptu.push_back(P * a);
    EXPECT_LT(max_diff(tPu, Ptu), 1e-10 * max_abs(tPu));
  }
}

INSTANTIATE_TEST_SUITE_P(Lattices, BlochTransformSuite, ::testing::Values(0, 1));

TEST(BlochTransform, PlaneWaveLandsOnOneSample) {
  const BlochTransform T(kSquare, 4, 3);
  const int n = 12, s = 1 + 4 * 2;
  Eigen::ArrayXXcd u(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) u(i, j) = std::polar(1.0, T.k(s).dot(kSquare.grid_point(i, j, 3, 3)));
  const auto t = T.forward(u);
  for (int r = 0; r < T.count(); ++r) {
    if (r == s)
      EXPECT_LT((t[r] - 1.0).abs().maxCoeff(), 1e-12);
    else
      EXPECT_LT(t[r].abs().maxCoeff(), 1e-12);
  }
}

TEST(BlochTransform, ShiftedSampleIsQuasiPeriodicPartner) {
  const BlochTransform T(kHex, 2, 4);
  std::mt19937_64 rng(5);
  const auto t = T.forward(random_array(8, rng));
  // s1 = S means k_0 + b1
  const Eigen::ArrayXXcd sh = T.shifted(t, 2, 0);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i)
      EXPECT_LT(std::abs(sh(i, j) - t[0](i, j) * std::polar(1.0, -kHex.b1().dot(T.cell_point(i, j)))), 1e-14);
}

TEST(BlochTransform, RejectsIncommensurateGrid) {
  EXPECT_THROW(BlochTransform::for_grid(kSquare, 3, 10, 10), std::invalid_argument);
  EXPECT_THROW(BlochTransform(kSquare, 0, 4), std::invalid_argument);
  const BlochTransform T(kSquare, 2, 4);
  EXPECT_THROW(T.forward(Eigen::ArrayXXcd::Zero(6, 6)), std::invalid_argument);
  EXPECT_THROW(T.inverse({}), std::invalid_argument);
}

TEST(Commensuration, ContinuedFractions) {
  EXPECT_EQ(rational_denominator(1.0 / 3.0).denominator, 3);
  EXPECT_EQ(rational_denominator(0.25).denominator, 4);
  EXPECT_EQ(rational_denominator(-0.4).denominator, 5);
  EXPECT_EQ(rational_denominator(2.0).denominator, 1);
  const Commensuration r = rational_denominator(std::sqrt(2.0), 50);
  EXPECT_LE(r.denominator, 50);
  EXPECT_GT(r.error, 0.0);
}

TEST(SupercellGrid, CoversEnvelopeAndCommensurates) {
  const Vec2 k = 0.25 * kSquare.b1() + (1.0 / 3.0) * kSquare.b2();
  const SupercellGrid g = SupercellGrid::make(kSquare, 5, 0.1, 2.0, -1, 12.0, {k});
  EXPECT_EQ(g.S % 12, 0);
  EXPECT_GE(g.inner_width() * g.eps_param, 12.0 - 1e-12);
  EXPECT_NEAR(g.omega(), 2.0 - 0.01, 1e-15);
  const SupercellGrid odd = SupercellGrid::make(kSquare, 5, 0.1, 2.0, 1, 12.0);
  EXPECT_EQ(odd.S % 2, 1);
  EXPECT_THROW(SupercellGrid::make(kSquare, 4, 0.1, 2.0, 1, 1.0), std::invalid_argument);
  EXPECT_THROW(SupercellGrid::make(kSquare, 5, 0.7, 2.0, 1, 1.0), std::invalid_argument);
}

TEST(Supercell, TiledBlochModeIsLinearSolution) {
  const Medium m = Medium::harmonic(kSquare, 2.0, {{1, 0, 1.0, 0.0}, {1, 1, 0.3, 0.0}});
  const BlochSolver s(m, 1.0, 2, Discretization::collocation);
  const int nc = s.n1();
  const Vec2 k = (1.0 / 3.0) * kSquare.b1();
  const BlochEigenpair p = fix_phase(s.eigenpairs(k, 1)[0]);
  SupercellGrid g = SupercellGrid::make(kSquare, nc, 0.2, p.omega, 1, 0.1, {k});
  ASSERT_EQ(g.S, 3);
  const MaxwellSupercell op(g, m.eps_field(nc, nc).samples, m.chi_field(nc, nc), 1.0);
  const int N = g.n();
  VectorField u(N, N);
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) {
      const cdouble ph = std::polar(1.0, k.dot(g.point(i, j)));
      for (int a = 0; a < 3; ++a) u[a](i, j) = ph * p.p[a](i % nc, j % nc);
    }
  EXPECT_LT(op.l2_norm(op.residual(u, p.omega, false)), 1e-8 * op.l2_norm(op.curlcurl(u)));
  // the magnetic field of an E-mode is divergence free
  EXPECT_LT(op.divergence(op.magnetic_field(u, p.omega)).abs().maxCoeff(), 1e-8 * u[0].abs().maxCoeff());
}

TEST(Supercell, JacobianMatchesFiniteDifference) {
  const Medium m = Medium::harmonic(kSquare, 2.0, {{1, 0, 1.0, 0.0}});
  SupercellGrid g = SupercellGrid::make(kSquare, 5, 0.2, 1.0, 1, 0.1);
  const MaxwellSupercell op(g, m.eps_field(5, 5).samples, m.chi_field(5, 5), 1.0);
  std::mt19937_64 rng(9);
  const VectorField u = random_field(g.n(), rng), d = random_field(g.n(), rng);
  const VectorField Jd = op.jacobian(u, d, 1.2);
  std::vector<double> ts{1e-3, 1e-4, 1e-5}, errs;
  for (double t : ts) {
    VectorField up = u;
    up.axpy(t, d);
    VectorField q = op.residual(up, 1.2) - op.residual(u, 1.2);
    q *= 1.0 / t;
    errs.push_back(op.l2_norm(q - Jd) / op.l2_norm(Jd));
  }
  EXPECT_NEAR(std::log(errs[0] / errs[2]) / std::log(100.0), 1.0, 0.1);
}

TEST(Supercell, RejectsMismatchedInputs) {
  const Medium m = Medium::homogeneous(kSquare, 1.0);
  SupercellGrid g = SupercellGrid::make(kSquare, 5, 0.2, 1.0, 1, 0.1);
  EXPECT_THROW(MaxwellSupercell(g, m.eps_field(7, 7).samples, m.chi_field(5, 5), 1.0), std::invalid_argument);
  EXPECT_THROW(MaxwellSupercell(g, m.eps_field(5, 5).samples, m.chi_field(7, 7), 1.0), std::invalid_argument);
  EXPECT_THROW(MaxwellSupercell(g, m.eps_field(5, 5).samples, m.chi_field(5, 5), 0.0), std::invalid_argument);
}

TEST(Ansatz, RequiresLargeEnoughSupercell) {
  const Medium m = Medium::harmonic(kSquare, 2.0, {{1, 0, 1.0, 0.0}});
  const BlochSolver s(m, 1.0, 2, Discretization::collocation);
  const BlochEigenpair p = fix_phase(s.eigenpairs(Vec2::Zero(), 1)[0]);
  EnvelopeState A(1, 16, 4.0);
  const SupercellGrid small = SupercellGrid::make(kSquare, s.n1(), 0.2, p.omega, -1, 1.0);
  EXPECT_THROW(assemble_ansatz(small, {p}, A), std::invalid_argument);
  const SupercellGrid g = SupercellGrid::make(kSquare, s.n1(), 0.2, p.omega, -1, 8.0);
  EXPECT_THROW(assemble_ansatz(g, {p, p}, A), std::invalid_argument);
  EXPECT_NO_THROW(assemble_ansatz(g, {p}, A));
}

TEST(Ansatz, PtSymmetricEnvelopeGivesPtSymmetricField) {
  const Medium m = Medium::harmonic(kSquare, 2.0, {{1, 0, 1.0, 0.0}});
  const BlochSolver s(m, 1.0, 2, Discretization::collocation);
  const BlochEigenpair p = fix_phase(s.eigenpairs(Vec2::Zero(), 1)[0]);
  EnvelopeState A(1, 16, 4.0);
  for (int i2 = 0; i2 < 16; ++i2)
    for (int i1 = 0; i1 < 16; ++i1) A.A[0](i1, i2) = std::exp(-(A.y(i1) * A.y(i1) + A.y(i2) * A.y(i2)));
  const SupercellGrid g = SupercellGrid::make(kSquare, s.n1(), 0.2, p.omega, -1, 8.0);
  const GapSolitonApprox a = assemble_ansatz(g, {p}, A);
  EXPECT_LT(pt_defect(a.u), 1e-10);
  // peak value eps * A(0) * p(0)
  const double peak = GapSolitonApprox::intensity(a.u).maxCoeff();
  EXPECT_NEAR(std::sqrt(peak), 0.2 * std::sqrt(GapSolitonApprox::intensity(p.p).maxCoeff()), 1e-2);
}

TEST(Envelope, SpectralInterpolationReproducesSamples) {
  std::mt19937_64 rng(2);
  EnvelopeState A(1, 12, 3.0);
  A.A[0] = random_array(12, rng);
  const Eigen::ArrayXXcd hat = fft_forward(A.A[0]);
  for (int i2 = 0; i2 < 12; i2 += 5)
    for (int i1 = 0; i1 < 12; i1 += 3) {
      const double y1 = A.y(i1), y2 = A.y(i2);
      EXPECT_LT(std::abs(interpolate_envelope(hat, 3.0, Vec2(y1, y2)) - A.A[0](i1, i2)), 1e-12);
    }
  EXPECT_EQ(interpolate_envelope(hat, 3.0, Vec2(3.5, 0.0)), cdouble(0.0));
}

TEST(LoglogSlope, ExactPowerLaw) {
  const std::vector<double> x{0.2, 0.15, 0.1, 0.07};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * v * v);
  EXPECT_NEAR(loglog_slope(x, y), 2.0, 1e-12);
  EXPECT_THROW(loglog_slope({1.0}, {1.0}), std::invalid_argument);
}

// The 1D model on the same Newton-Krylov path.
TEST(ScalarToy, NewtonKrylovConvergesToPtState) {
  const int n = 64;
  const double length = 40.0;
  Eigen::ArrayXd eps = Eigen::ArrayXd::Constant(n, 1.0), chi = Eigen::ArrayXd::Constant(n, 1.0);
  const ScalarToy toy(eps, chi, length, 1.0);
  // -u'' + (1 - w^2) u = w^2 |u|^2 u has the sech solution
  const double w = 0.8, q = std::sqrt(1 - w * w);
  Eigen::VectorXcd exact(n), guess(n);
  for (int i = 0; i < n; ++i) {
    const double x = -length / 2 + i * length / n;
    exact(i) = std::sqrt(2.0) * q / w / std::cosh(q * x);
    guess(i) = 1.1 * exact(i);
  }
  // shift the grid so x = 0 sits at index 0 for the PT projector
  Eigen::VectorXcd e0(n), g0(n);
  for (int i = 0; i < n; ++i) {
    e0(i) = exact((i + n / 2) % n);
    g0(i) = guess((i + n / 2) % n);
  }
  NewtonKrylovReport rep;
  const Eigen::VectorXcd u = toy.solve(g0, w, {}, &rep);
  EXPECT_LT(toy.norm(toy.residual(u, w)), 1e-8 * toy.norm(u));
  EXPECT_LT((u - e0).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_LT((toy.pt_project(u) - u).norm(), 1e-12 * u.norm());
}

TEST(ScalarToy, JacobianMatchesFiniteDifference) {
  const int n = 32;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  Eigen::ArrayXd eps(n), chi(n);
  Eigen::VectorXcd u(n), d(n);
  for (int i = 0; i < n; ++i) {
    eps(i) = 2.0 + std::cos(2 * kPi * i / n);
    chi(i) = 1.0;
    u(i) = cdouble(nd(rng), nd(rng));
    d(i) = cdouble(nd(rng), nd(rng));
  }
  const ScalarToy toy(eps, chi, 2 * kPi, 1.0);
  const Eigen::VectorXcd Jd = toy.jacobian(u, d, 0.9);
  const double t = 1e-6;
  const Eigen::VectorXcd fd = (toy.residual(u + t * d, 0.9) - toy.residual(u - t * d, 0.9)) / (2 * t);
  EXPECT_LT((fd - Jd).norm(), 1e-6 * Jd.norm());
}
