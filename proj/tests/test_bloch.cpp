#include "gapsol/bands.hpp"
#include "gapsol/bloch.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace gapsol;

namespace {

const Lattice kSquare = Lattice::square(2 * kPi);

Medium cosine_medium() { return Medium::harmonic(kSquare, 2.0, {{1, 0, 1.0, 0.0}}); }

Vec2 random_bz_point(const Lattice& lat, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return lat.reduce_to_bz(u(rng) * lat.b1() + u(rng) * lat.b2());
}

VectorField random_field(int n1, int n2, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  VectorField f(n1, n2);
  for (int a = 0; a < 3; ++a)
    for (Eigen::Index i = 0; i < f[a].size(); ++i) f[a](i) = cdouble(nd(rng), nd(rng));
  return f;
}

double rel_err(cdouble a, double scale) { return std::abs(a) / scale; }

}  // namespace

TEST(TransverseBasis, PolarizationsAreTransverseAndOrthonormal) {
  const TransverseBasis b(Lattice::hexagonal(1.0), Vec2(0.3, -0.7), 1.5, 3, Discretization::galerkin, 64, 64);
  EXPECT_EQ(b.dim(), 2 * b.waves());
  for (int i = 0; i < b.waves(); ++i) {
    for (int m = 0; m < 2; ++m) {
      EXPECT_NEAR(b.pol(i, m).dot(b.ktilde(i)), 0.0, 1e-12 * b.ktilde(i).norm());
      EXPECT_NEAR(b.pol(i, m).norm(), 1.0, 1e-12);
    }
    EXPECT_NEAR(b.pol(i, 0).dot(b.pol(i, 1)), 0.0, 1e-12);
  }
}

TEST(TransverseBasis, RejectsZeroKappaAndCoarseGrid) {
  EXPECT_THROW(TransverseBasis(kSquare, Vec2::Zero(), 0.0, 2, Discretization::galerkin, 64, 64), std::invalid_argument);
  EXPECT_THROW(TransverseBasis(kSquare, Vec2::Zero(), 1.0, 4, Discretization::galerkin, 8, 8), std::invalid_argument);
  EXPECT_THROW(TransverseBasis(kSquare, Vec2::Zero(), 1.0, 2, Discretization::collocation, 4, 5), std::invalid_argument);
  EXPECT_THROW(BlochSolver(cosine_medium(), 0.0, 2), std::invalid_argument);
}

TEST(HOperator, HermitianAndNonnegative) {
  const BlochSolver s(Medium::ring(Lattice::hexagonal(1.0), 0.27, 0.5, 2.1025, 1.0, 0.03), 3.0, 3);
  const auto b = s.basis(Vec2(0.4, 0.9));
  const Eigen::MatrixXcd m = s.matrix(*b);
  EXPECT_LE((m - m.adjoint()).norm(), 1e-12 * m.norm());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
}

TEST(HOperator, ScaledHomogeneousExample) {
  const BlochSolver s(Medium::homogeneous(kSquare, 4.0), 2.0, 2);
  EXPECT_NEAR(s.eigenvalues(Vec2(0.5, 0.0), 1)(0), 1.0625, 1e-12);
}

TEST(SolveEigenpairs, DiagonalExampleAndShiftInvert) {
  Eigen::MatrixXcd d = Eigen::MatrixXcd::Zero(2, 2);
  d(0, 0) = 1.0;
  d(1, 1) = 4.0;
  const auto r = solve_eigenpairs(d, 2);
  EXPECT_NEAR(r.values(0), 1.0, 1e-14);
  EXPECT_NEAR(r.values(1), 4.0, 1e-14);
  EXPECT_NEAR(std::abs(r.vectors(0, 0)), 1.0, 1e-14);

  // iterative path on a matrix above the dense limit
  const BlochSolver s(cosine_medium(), 1.0, 4);
  const auto b = s.basis(Vec2(0.2, 0.1));
  const Eigen::MatrixXcd m = s.matrix(*b);
  EigenOptions opt;
  opt.dense_limit = 10;
  const auto it = solve_eigenpairs(m, 4, opt);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m);
  for (int n = 0; n < 4; ++n) EXPECT_NEAR(it.values(n), es.eigenvalues()(n), 1e-10 * es.eigenvalues()(n));
  const Eigen::MatrixXcd g = it.vectors.adjoint() * it.vectors;
  EXPECT_LT((g - Eigen::MatrixXcd::Identity(4, 4)).norm(), 1e-10);
}

// Homogeneous medium along a 21-point G-X path against the closed form.
TEST(Bloch, HomogeneousClosedForm) {
  const BlochSolver s(Medium::homogeneous(kSquare, 1.0), 1.0, 3);
  const auto bs = sweep_path(s, KPath::through(kSquare, {"G", "X"}, {20}), 6);
  ASSERT_EQ(bs.points(), 21);
  double worst = 0.0;
  for (int i = 0; i < bs.points(); ++i) {
    const auto ref = oracle::homogeneous_omegas(kSquare, bs.k[i], 1.0, 1.0, 6);
    for (int n = 0; n < 6; ++n) worst = std::max(worst, std::abs(bs.omega(i, n) - ref[n]) / ref[n]);
  }
  EXPECT_LT(worst, 1e-10);
  EXPECT_NEAR(s.eigenvalues(Vec2::Zero(), 2)(1), 1.0, 1e-12);
}

// Galerkin route against a dense three-component H-field oracle.
TEST(Bloch, GalerkinMatchesDenseOracle) {
  std::mt19937_64 rng(2024);
  const BlochSolver s(cosine_medium(), 1.0, 2);
  for (int t = 0; t < 25; ++t) {
    const Vec2 k = random_bz_point(kSquare, rng);
    const Eigen::VectorXd w = s.eigenvalues(k, 4);
    const auto ref = oracle::h_field_eigenvalues(kSquare, s.eps(), k, 1.0, 2, 4);
    for (int n = 0; n < 4; ++n) EXPECT_NEAR(w(n), ref[n], 1e-10 * ref[n]) << "k=" << k.transpose() << " n=" << n;
  }
}

// Collocation route against an E-field generalized pencil on the same grid.
TEST(Bloch, CollocationMatchesPencilOracle) {
  std::mt19937_64 rng(77);
  const BlochSolver s(cosine_medium(), 1.0, 2, Discretization::collocation);
  ASSERT_EQ(s.n1(), 5);
  for (int t = 0; t < 25; ++t) {
    const Vec2 k = random_bz_point(kSquare, rng);
    const Eigen::VectorXd w = s.eigenvalues(k, 4);
    const auto ref = oracle::e_field_collocation_eigenvalues(kSquare, s.eps(), k, 1.0, 4);
    for (int n = 0; n < 4; ++n) EXPECT_NEAR(w(n), ref[n], 1e-10 * ref[n]) << "k=" << k.transpose() << " n=" << n;
  }
}

TEST(Bloch, CutoffConvergenceOnSmoothMedium) {
  const Vec2 k(0.21, 0.13);
  const double w5 = BlochSolver(cosine_medium(), 1.0, 5).eigenvalues(k, 1)(0);
  const double w6 = BlochSolver(cosine_medium(), 1.0, 6).eigenvalues(k, 1)(0);
  EXPECT_LT(std::abs(w6 - w5) / w6, 1e-6);
}

TEST(Bloch, PeriodicInK) {
  const Lattice hx = Lattice::hexagonal(1.0);
  const BlochSolver s(Medium::ring(hx, 0.27, 0.5, 2.1025, 1.0, 0.03), 8.0, 4);
  const Vec2 k(0.9, -1.3);
  const Eigen::VectorXd a = s.eigenvalues(k, 6), b = s.eigenvalues(k + hx.reciprocal(2, -1), 6);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-10 * a.maxCoeff());
}

TEST(Eigenpairs, NormalizationOrthogonalityAndResidual) {
  const BlochSolver s(cosine_medium(), 1.0, 4);
  const auto pairs = s.eigenpairs(Vec2(0.3, 0.2), 4);
  const double w = s.quadrature_weight();
  for (int i = 0; i < 4; ++i) {
    EXPECT_LT(e_field_residual(pairs[i], s), 1e-8);
    for (int j = 0; j < 4; ++j) {
      cdouble g = 0.0;
      for (int a = 0; a < 3; ++a) g += (s.eps() * pairs[i].p[a] * pairs[j].p[a].conjugate()).sum();
      g *= w;
      EXPECT_NEAR(std::abs(g - (i == j ? 1.0 : 0.0)), 0.0, 1e-8) << i << "," << j;
    }
  }
}

TEST(Eigenpairs, CurlRelation) {
  // curl' p = i omega q, compared mode by mode
  const BlochSolver s(cosine_medium(), 1.0, 3);
  const auto pairs = s.eigenpairs(Vec2(0.1, -0.35), 2);
  for (const auto& pr : pairs) {
    const auto& b = *pr.basis;
    const VectorField h = pr.p_hat();
    const VectorField q = s.q_field(b, pr.coeffs);
    VectorField qh;
    for (int a = 0; a < 3; ++a) qh[a] = fft_forward(q[a]);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < b.waves(); ++i) {
      const int si = slot_index(b.wave(i).m, s.n1()), sj = slot_index(b.wave(i).n, s.n2());
      const Vec3c pv(h[0](si, sj), h[1](si, sj), h[2](si, sj)), qv(qh[0](si, sj), qh[1](si, sj), qh[2](si, sj));
      const Vec3c lhs = kI * b.ktilde(i).cast<cdouble>().cross(pv);
      num += (lhs - kI * pr.omega * qv).squaredNorm();
      den += (pr.omega * qv).squaredNorm();
    }
    EXPECT_LT(std::sqrt(num / den), 1e-8);
  }
}

TEST(Eigenpairs, RecoverRejectsZeroFrequency) {
  const BlochSolver s(cosine_medium(), 1.0, 2);
  auto p = s.eigenpairs(Vec2::Zero(), 1)[0];
  p.omega = 0.0;
  EXPECT_THROW(recover_e_field(p, s), std::invalid_argument);
}

TEST(Eigenpairs, HomogeneousModeIsPolarizedPlaneWave) {
  const BlochSolver s(Medium::homogeneous(kSquare, 1.0), 1.0, 2);
  const auto p = s.eigenpairs(Vec2(0.1, 0.05), 1)[0];
  EXPECT_TRUE(p.degenerate);
  const VectorField h = p.p_hat();
  double tot = 0.0;
  for (int a = 0; a < 3; ++a) tot += h[a].abs2().sum();
  double dc = 0.0;
  for (int a = 0; a < 3; ++a) dc += std::norm(h[a](0, 0));
  EXPECT_NEAR(dc / tot, 1.0, 1e-12);
}

TEST(Symmetry, OmegaEvenInK) {
  std::mt19937_64 rng(3);
  const BlochSolver s(cosine_medium(), 1.0, 4);
  const Lattice hx = Lattice::hexagonal(1.0);
  const BlochSolver r(Medium::ring(hx, 0.27, 0.5, 2.1025, 1.0, 0.03), 6.0, 4);
  for (int t = 0; t < 10; ++t) {
    const Vec2 k = random_bz_point(kSquare, rng);
    EXPECT_LT((s.eigenvalues(k, 6) - s.eigenvalues(-k, 6)).cwiseAbs().maxCoeff(), 1e-8);
    const Vec2 q = random_bz_point(hx, rng);
    EXPECT_LT((r.eigenvalues(q, 6) - r.eigenvalues(-q, 6)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Symmetry, PhaseFixedModesArePtSymmetric) {
  std::mt19937_64 rng(8);
  const BlochSolver s(cosine_medium(), 1.0, 4);
  int checked = 0;
  for (int t = 0; t < 10; ++t) {
    const Vec2 k = random_bz_point(kSquare, rng);
    for (auto p : s.eigenpairs(k, 3)) {
      p = fix_phase(p);
      if (!p.phase_reliable) continue;
      ++checked;
      EXPECT_LT(p.pt_defect, 1e-8) << "k=" << k.transpose() << " band " << p.band;
    }
  }
  EXPECT_GT(checked, 10);
}

TEST(Symmetry, FixPhaseRealAtGammaAndNegativeK) {
  const BlochSolver s(cosine_medium(), 1.0, 3);
  const auto p = fix_phase(s.eigenpairs(Vec2::Zero(), 1)[0]);
  EXPECT_LT(p.pt_defect, 1e-10);
  const auto q = fix_phase(s.eigenpairs(Vec2(0.3, 0.2), 1)[0]);
  const auto m = negative_k(q);
  EXPECT_TRUE((m.k + q.k).isZero());
  EXPECT_LT((m.p - conj(q.p)).max_abs(), 1e-15);
  // the stored partner is an eigenfunction at -k with the same value
  EXPECT_LT(std::abs(s.eigenvalues(-q.k, 1)(0) - q.omega2), 1e-10);
}

TEST(Projections, IdempotentAndComplementary) {
  std::mt19937_64 rng(17);
  const BlochSolver s(cosine_medium(), 1.0, 3);
  const auto p = fix_phase(s.eigenpairs(Vec2(0.3, 0.2), 1)[0]);
  const ProjectionSet ps(p.p, s.eps(), kSquare.cell_area());
  EXPECT_LT((ps.apply(Projection::P, p.p) - p.p).max_abs(), 1e-12);
  EXPECT_LT(ps.apply(Projection::Q, p.p).max_abs(), 1e-12);
  for (int t = 0; t < 20; ++t) {
    const VectorField f = random_field(s.n1(), s.n2(), rng);
    const double sc = f.max_abs();
    for (auto which : {Projection::P, Projection::Q, Projection::Peps, Projection::Qeps, Projection::epsP, Projection::epsQ}) {
      const VectorField once = ps.apply(which, f);
      EXPECT_LT((ps.apply(which, once) - once).max_abs(), 1e-12 * sc);
    }
    EXPECT_LT((ps.apply(Projection::P, f) + ps.apply(Projection::Q, f) - f).max_abs(), 1e-12 * sc);
  }
}

// Orthogonality relations (i)-(iv) of the eps-weighted projections.
TEST(Projections, OrthogonalityRelations) {
  std::mt19937_64 rng(19);
  const BlochSolver s(cosine_medium(), 1.0, 3);
  const auto p = fix_phase(s.eigenpairs(Vec2(-0.2, 0.4), 1)[0]);
  const ProjectionSet ps(p.p, s.eps(), kSquare.cell_area());
  const Eigen::ArrayXXd one = Eigen::ArrayXXd::Ones(s.n1(), s.n2());
  const Eigen::ArrayXXd inv = s.eps().inverse();
  for (int t = 0; t < 100; ++t) {
    const VectorField f = random_field(s.n1(), s.n2(), rng), g = random_field(s.n1(), s.n2(), rng);
    const double sc = std::sqrt(ps.inner(f, f).real() * ps.inner(g, g).real()) * s.eps().maxCoeff();
    const VectorField Pe = ps.apply(Projection::Peps, f), eP = ps.apply(Projection::epsP, f);
    const VectorField Qe = ps.apply(Projection::Qeps, g), eQ = ps.apply(Projection::epsQ, g);
    EXPECT_LT(rel_err(ps.weighted_inner(Pe, eQ, one), sc), 1e-10);
    EXPECT_LT(rel_err(ps.weighted_inner(eP, Qe, one), sc), 1e-10);
    EXPECT_LT(rel_err(ps.weighted_inner(Pe, Qe, s.eps()), sc), 1e-10);
    EXPECT_LT(rel_err(ps.weighted_inner(eP, eQ, inv), sc), 1e-10);
    EXPECT_LT(rel_err(ps.inner(ps.apply(Projection::P, f), ps.apply(Projection::Q, g)), sc), 1e-10);
  }
}

TEST(Helmholtz, OrthogonalPartsOnRandomFields) {
  std::mt19937_64 rng(23);
  const Lattice hx = Lattice::hexagonal(1.0);
  const Vec2 k(0.7, -0.4);
  const double kappa = 1.7;
  for (int t = 0; t < 100; ++t) {
    const VectorField f = random_field(12, 12, rng);
    const auto h = helmholtz_decompose(f, hx, k, kappa);
    const double ff = grid_dot(f, f).real();
    EXPECT_LT(std::abs(grid_dot(h.w, h.grad)) / ff, 1e-10);
    EXPECT_NEAR((grid_dot(h.w, h.w).real() + grid_dot(h.grad, h.grad).real()) / ff, 1.0, 1e-10);
    EXPECT_LT((h.w + h.grad - f).max_abs() / f.max_abs(), 1e-12);
    // w is divergence free mode by mode
    VectorField wh;
    for (int a = 0; a < 3; ++a) wh[a] = fft_forward(h.w[a]);
    double div = 0.0;
    for (int j = 0; j < 12; ++j)
      for (int i = 0; i < 12; ++i) {
        const Vec2 q = k + hx.reciprocal(signed_index(i, 12), signed_index(j, 12));
        div = std::max(div, std::abs(q.x() * wh[0](i, j) + q.y() * wh[1](i, j) + kappa * wh[2](i, j)));
      }
    EXPECT_LT(div / std::sqrt(ff), 1e-10);
  }
}

TEST(Helmholtz, PureGradientAndTransverseWave) {
  std::mt19937_64 rng(29);
  const Vec2 k(0.2, 0.1);
  const double kappa = 1.0;
  const int n = 8;
  Eigen::ArrayXXcd psi_hat(n, n);
  std::normal_distribution<double> nd;
  for (Eigen::Index i = 0; i < psi_hat.size(); ++i) psi_hat(i) = cdouble(nd(rng), nd(rng));
  VectorField gh(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const Vec2 q = k + kSquare.reciprocal(signed_index(i, n), signed_index(j, n));
      const Vec3 kt(q.x(), q.y(), kappa);
      for (int a = 0; a < 3; ++a) gh[a](i, j) = kI * kt(a) * psi_hat(i, j);
    }
  VectorField grad;
  for (int a = 0; a < 3; ++a) grad[a] = fft_backward(gh[a]);
  const auto h = helmholtz_decompose(grad, kSquare, k, kappa);
  EXPECT_LT(h.w.max_abs() / grad.max_abs(), 1e-10);

  const TransverseBasis b(kSquare, k, kappa, 1, Discretization::galerkin, n, n);
  VectorField wh(n, n);
  for (int a = 0; a < 3; ++a) wh[a](slot_index(b.wave(3).m, n), slot_index(b.wave(3).n, n)) = b.pol(3, 1)(a);
  VectorField wave;
  for (int a = 0; a < 3; ++a) wave[a] = fft_backward(wh[a]);
  const auto t = helmholtz_decompose(wave, kSquare, k, kappa);
  EXPECT_LT(t.psi.abs().maxCoeff(), 1e-14);
}

TEST(Helmholtz, RejectsZeroKappa) {
  EXPECT_THROW(helmholtz_decompose(VectorField(4, 4), kSquare, Vec2::Zero(), 0.0), std::invalid_argument);
}

TEST(Regularity, H2NormBoundedAcrossZone) {
  const BlochSolver s(cosine_medium(), 1.0, 4);
  const BzGrid g = BzGrid::make(kSquare, 6);
  double mx = 0.0, mn = INFINITY;
  for (const auto& k : g.k) {
    const double h2 = h2_norm_periodic(s.eigenpairs(kSquare.reduce_to_bz(k), 1)[0].p, kSquare);
    mx = std::max(mx, h2);
    mn = std::min(mn, h2);
  }
  EXPECT_TRUE(std::isfinite(mx));
  EXPECT_LT(mx / mn, 10.0);
}
