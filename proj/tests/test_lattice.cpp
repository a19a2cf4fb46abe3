#include "gapsol/lattice.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace gapsol;

TEST(Lattice, ReciprocalBasisIsDual) {
  for (const Lattice& lat : {Lattice::square(2 * kPi), Lattice::hexagonal(1.0), Lattice(Vec2(1.0, 0.2), Vec2(-0.3, 1.7))}) {
    EXPECT_NEAR(lat.a1().dot(lat.b1()), 2 * kPi, 1e-12);
    EXPECT_NEAR(lat.a2().dot(lat.b2()), 2 * kPi, 1e-12);
    EXPECT_NEAR(lat.a1().dot(lat.b2()), 0.0, 1e-12);
    EXPECT_NEAR(lat.a2().dot(lat.b1()), 0.0, 1e-12);
    EXPECT_NEAR(lat.cell_area() * lat.bz_area(), 4 * kPi * kPi, 1e-10);
  }
}

TEST(Lattice, DegenerateVectorsRejected) {
  EXPECT_THROW(Lattice(Vec2(1, 0), Vec2(2, 0)), std::invalid_argument);
}

TEST(Lattice, PointGroupOrders) {
  EXPECT_EQ(Lattice::square(1.0).point_group().size(), 8u);
  EXPECT_EQ(Lattice::hexagonal(1.0).point_group().size(), 12u);
  EXPECT_EQ(Lattice(Vec2(1.0, 0.0), Vec2(0.0, 2.0)).point_group().size(), 4u);
  EXPECT_EQ(Lattice(Vec2(1.0, 0.2), Vec2(-0.3, 1.7)).point_group().size(), 2u);
}

TEST(Lattice, PointGroupPreservesReciprocalLattice) {
  const Lattice lat = Lattice::hexagonal(1.3);
  for (const auto& R : lat.point_group()) {
    EXPECT_TRUE(lat.is_reciprocal_vector(R * lat.b1()));
    EXPECT_TRUE(lat.is_reciprocal_vector(R * lat.b2()));
    EXPECT_NEAR((R.transpose() * R - Mat2::Identity()).norm(), 0.0, 1e-12);
  }
}

TEST(Lattice, ReductionIsIdempotentAndShortest) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-20, 20);
  for (const Lattice& lat : {Lattice::square(2 * kPi), Lattice::hexagonal(1.0), Lattice(Vec2(1.0, 0.2), Vec2(-0.3, 1.7))}) {
    for (int t = 0; t < 200; ++t) {
      const Vec2 k(u(rng), u(rng));
      const Vec2 r = lat.reduce_to_bz(k);
      EXPECT_TRUE(lat.is_reciprocal_vector(k - r, 1e-9));
      EXPECT_TRUE(lat.in_bz(r, 1e-9));
      EXPECT_NEAR((lat.reduce_to_bz(r) - r).norm(), 0.0, 1e-9);
      for (int m = -2; m <= 2; ++m)
        for (int n = -2; n <= 2; ++n) EXPECT_LE(r.norm(), (r + lat.reciprocal(m, n)).norm() + 1e-9);
    }
  }
}

TEST(Lattice, SymmetryPoints) {
  const Lattice sq = Lattice::square(2 * kPi);
  EXPECT_NEAR((sq.symmetry_point("X") - Vec2(0.5, 0.0)).norm(), 0.0, 1e-14);
  EXPECT_NEAR((sq.symmetry_point("M") - Vec2(0.5, 0.5)).norm(), 0.0, 1e-14);
  const Lattice hx = Lattice::hexagonal(1.0);
  const Vec2 M = hx.symmetry_point("M"), K = hx.symmetry_point("K");
  EXPECT_NEAR(M.norm(), 2 * kPi / std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(K.norm(), 4 * kPi / 3.0, 1e-12);
  EXPECT_THROW(hx.symmetry_point("X"), std::invalid_argument);
  // K is a threefold point: its 120-degree images are reciprocal-equivalent
  Mat2 R;
  R << std::cos(2 * kPi / 3), -std::sin(2 * kPi / 3), std::sin(2 * kPi / 3), std::cos(2 * kPi / 3);
  EXPECT_TRUE(hx.is_reciprocal_vector(R * K - K, 1e-12));
}

TEST(KPath, SamplesVerticesAndArclength) {
  const Lattice lat = Lattice::square(2 * kPi);
  const auto s = KPath::through(lat, {"G", "X", "M"}, {10, 5}).sample();
  ASSERT_EQ(s.k.size(), 16u);
  EXPECT_NEAR(s.k[10].x(), 0.5, 1e-14);
  EXPECT_NEAR(s.arclength.back(), 1.0, 1e-14);
  for (size_t i = 1; i < s.k.size(); ++i) EXPECT_GT(s.arclength[i], s.arclength[i - 1]);
  EXPECT_THROW(KPath::through(lat, {"G"}, {}), std::invalid_argument);
}

TEST(BzGrid, InvariantUnderInversion) {
  const Lattice lat = Lattice::hexagonal(1.0);
  const BzGrid g = BzGrid::make(lat, 7);
  for (const auto& k : g.k) {
    bool found = false;
    for (const auto& q : g.k) found = found || lat.is_reciprocal_vector(k + q, 1e-10);
    EXPECT_TRUE(found);
  }
  EXPECT_EQ(g.index(-1, 0), 6);
  EXPECT_EQ(g.index(7, 8), 7);
}
