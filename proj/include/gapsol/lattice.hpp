#pragma once

#include "gapsol/common.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace gapsol {

struct ReciprocalBasis {
  Vec2 b1, b2;
};

inline ReciprocalBasis reciprocal_basis(const Vec2& a1, const Vec2& a2) {
  const double det = a1.x() * a2.y() - a1.y() * a2.x();
  if (!(std::abs(det) > 1e-12 * a1.norm() * a2.norm()))
    throw std::invalid_argument("reciprocal_basis: lattice vectors are linearly dependent");
  Mat2 a;
  a.col(0) = a1;
  a.col(1) = a2;
  const Mat2 b = 2.0 * kPi * a.inverse().transpose();
  return {b.col(0), b.col(1)};
}

class Lattice {
 public:
  Lattice() : Lattice(Vec2(2 * kPi, 0), Vec2(0, 2 * kPi)) {}
  Lattice(const Vec2& a1, const Vec2& a2, std::string name = "custom") : a1_(a1), a2_(a2), name_(std::move(name)) {
    const auto rb = reciprocal_basis(a1, a2);
    b1_ = rb.b1;
    b2_ = rb.b2;
    a_.col(0) = a1_;
    a_.col(1) = a2_;
    b_.col(0) = b1_;
    b_.col(1) = b2_;
    a_inv_ = a_.inverse();
    b_inv_ = b_.inverse();
    reduced_ = lagrange_reduce(b1_, b2_);
    reduced_inv_ = reduced_.inverse();
  }

  static Lattice square(double a0) { return Lattice(Vec2(a0, 0), Vec2(0, a0), "square"); }
  static Lattice hexagonal(double a0) {
    return Lattice(Vec2(a0, 0), Vec2(0.5 * a0, 0.5 * std::sqrt(3.0) * a0), "hexagonal");
  }

  const Vec2& a1() const { return a1_; }
  const Vec2& a2() const { return a2_; }
  const Vec2& b1() const { return b1_; }
  const Vec2& b2() const { return b2_; }
  const std::string& name() const { return name_; }

  double cell_area() const { return std::abs(a_.determinant()); }
  double bz_area() const { return std::abs(b_.determinant()); }

  // Position of the fractional grid sample (i/n1) a1 + (j/n2) a2.
  Vec2 grid_point(int i, int j, int n1, int n2) const {
    return (static_cast<double>(i) / n1) * a1_ + (static_cast<double>(j) / n2) * a2_;
  }
  Vec2 reciprocal(int m, int n) const { return m * b1_ + n * b2_; }
  Vec2 to_fractional(const Vec2& x) const { return a_inv_ * x; }
  Vec2 to_reciprocal_coords(const Vec2& k) const { return b_inv_ * k; }

  // Representative of k + Lambda* in the Wigner-Seitz cell. Boundary ties go to
  // the lexicographically smallest candidate.
  Vec2 reduce_to_bz(const Vec2& k) const {
    const Vec2 f = reduced_inv_ * k;
    const double fx = std::round(f.x()), fy = std::round(f.y());
    const double scale = std::max(reduced_.col(0).norm(), reduced_.col(1).norm());
    const double tie = 1e-12 * scale * scale;
    Vec2 best = k;
    double best_n2 = INFINITY;
    for (int dm = -2; dm <= 2; ++dm) {
      for (int dn = -2; dn <= 2; ++dn) {
        const Vec2 cand = k - reduced_ * Vec2(fx + dm, fy + dn);
        const double n2 = cand.squaredNorm();
        if (n2 < best_n2 - tie) {
          best = cand;
          best_n2 = n2;
        } else if (std::abs(n2 - best_n2) <= tie && lex_less(cand, best, 1e-12 * scale)) {
          best = cand;
          best_n2 = std::min(best_n2, n2);
        }
      }
    }
    return best;
  }

  bool in_bz(const Vec2& k, double tol = 1e-12) const {
    const double scale = std::max(b1_.norm(), b2_.norm());
    return (reduce_to_bz(k) - k).norm() <= tol * scale;
  }

  // Integer coordinates of the nearest reciprocal lattice point to v.
  Eigen::Vector2i nearest_reciprocal(const Vec2& v) const {
    const Vec2 f = reduced_inv_ * v;
    Eigen::Vector2i best(0, 0);
    double best_r = INFINITY;
    for (int dm = -1; dm <= 1; ++dm) {
      for (int dn = -1; dn <= 1; ++dn) {
        const Vec2 m(std::round(f.x()) + dm, std::round(f.y()) + dn);
        const double r = (v - reduced_ * m).norm();
        if (r < best_r) {
          best_r = r;
          const Vec2 orig = b_inv_ * (reduced_ * m);
          best = Eigen::Vector2i(static_cast<int>(std::lround(orig.x())), static_cast<int>(std::lround(orig.y())));
        }
      }
    }
    return best;
  }

  bool is_reciprocal_vector(const Vec2& v, double tol = 1e-10) const {
    if (!(tol > 0)) throw std::invalid_argument("is_reciprocal_vector: tol must be positive");
    const Eigen::Vector2i m = nearest_reciprocal(v);
    return (v - reciprocal(m.x(), m.y())).norm() < tol * (1.0 + v.norm());
  }

  bool is_lattice_vector(const Vec2& x, double tol = 1e-10) const {
    const Vec2 f = a_inv_ * x;
    return std::abs(f.x() - std::round(f.x())) + std::abs(f.y() - std::round(f.y())) < tol * (1.0 + f.norm());
  }

  // Orthogonal maps of the plane preserving the lattice, from rotations by
  // multiples of 30 degrees and mirrors through lines at multiples of 15 degrees.
  std::vector<Mat2> point_group() const {
    std::vector<Mat2> ops;
    auto accept = [&](const Mat2& r) {
      if (is_lattice_vector(r * a1_) && is_lattice_vector(r * a2_)) {
        for (const auto& o : ops)
          if ((o - r).norm() < 1e-9) return;
        ops.push_back(r);
      }
    };
    for (int j = 0; j < 12; ++j) {
      const double t = j * kPi / 6.0;
      Mat2 r;
      r << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
      accept(r);
    }
    for (int j = 0; j < 12; ++j) {
      const double t = 2.0 * j * kPi / 12.0;
      Mat2 r;
      r << std::cos(t), std::sin(t), std::sin(t), -std::cos(t);
      accept(r);
    }
    return ops;
  }

  // Named high-symmetry points: "G", "X", "Y", "M", "K".
  Vec2 symmetry_point(const std::string& label) const {
    const bool hex = std::abs(b1_.norm() - b2_.norm()) < 1e-9 * b1_.norm() &&
                     std::abs(std::abs(b1_.dot(b2_)) - 0.5 * b1_.squaredNorm()) < 1e-9 * b1_.squaredNorm();
    if (label == "G" || label == "Gamma") return Vec2::Zero();
    if (hex) {
      if (label == "M") return 0.5 * b1_;
      if (label == "K") return b1_.dot(b2_) < 0 ? Vec2((2.0 * b1_ + b2_) / 3.0) : Vec2((2.0 * b1_ - b2_) / 3.0);
    } else {
      if (label == "X") return 0.5 * b1_;
      if (label == "Y") return 0.5 * b2_;
      if (label == "M") return 0.5 * (b1_ + b2_);
    }
    throw std::invalid_argument("symmetry_point: unknown label '" + label + "' for lattice " + name_);
  }

 private:
  static bool lex_less(const Vec2& a, const Vec2& b, double tol) {
    if (std::abs(a.x() - b.x()) > tol) return a.x() < b.x();
    if (std::abs(a.y() - b.y()) > tol) return a.y() < b.y();
    return false;
  }

  static Mat2 lagrange_reduce(Vec2 u, Vec2 v) {
    if (u.squaredNorm() > v.squaredNorm()) std::swap(u, v);
    for (int it = 0; it < 64; ++it) {
      const double mu = std::round(u.dot(v) / u.squaredNorm());
      v -= mu * u;
      if (v.squaredNorm() >= u.squaredNorm()) break;
      std::swap(u, v);
    }
    Mat2 r;
    r.col(0) = u;
    r.col(1) = v;
    return r;
  }

  Vec2 a1_, a2_, b1_, b2_;
  std::string name_;
  Mat2 a_, b_, a_inv_, b_inv_, reduced_, reduced_inv_;
};

// Piecewise-linear path through named vertices.
struct KPath {
  std::vector<std::string> labels;
  std::vector<Vec2> vertices;
  std::vector<int> counts;  // samples per segment, the closing vertex included only once at the end

  struct Samples {
    std::vector<Vec2> k;
    std::vector<double> arclength;
  };

  static KPath through(const Lattice& lat, const std::vector<std::string>& labels, const std::vector<int>& counts) {
    if (labels.size() < 2 || counts.size() + 1 != labels.size())
      throw std::invalid_argument("KPath: need n vertices and n-1 segment counts");
    KPath p;
    p.labels = labels;
    p.counts = counts;
    for (const auto& l : labels) p.vertices.push_back(lat.symmetry_point(l));
    return p;
  }

  Samples sample() const {
    Samples s;
    double t = 0.0;
    for (size_t seg = 0; seg + 1 < vertices.size(); ++seg) {
      const int n = counts[seg];
      if (n < 1) throw std::invalid_argument("KPath: segment count must be positive");
      const Vec2 d = vertices[seg + 1] - vertices[seg];
      const double len = d.norm();
      if (len == 0.0) throw std::invalid_argument("KPath: repeated vertex");
      for (int i = 0; i < n; ++i) {
        s.k.push_back(vertices[seg] + (static_cast<double>(i) / n) * d);
        s.arclength.push_back(t + len * i / n);
      }
      t += len;
    }
    s.k.push_back(vertices.back());
    s.arclength.push_back(t);
    return s;
  }
};

// Uniform n x n sampling of the reciprocal cell, k_ij = (i/n) b1 + (j/n) b2,
// periodic in both indices. The sampling is invariant under k -> -k.
struct BzGrid {
  int n = 0;
  std::vector<Vec2> k;  // index i + n*j

  static BzGrid make(const Lattice& lat, int n) {
    if (n < 3) throw std::invalid_argument("BzGrid: need at least 3 points per direction");
    BzGrid g;
    g.n = n;
    g.k.reserve(static_cast<size_t>(n) * n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) g.k.push_back((static_cast<double>(i) / n) * lat.b1() + (static_cast<double>(j) / n) * lat.b2());
    return g;
  }
  int index(int i, int j) const { return ((i % n + n) % n) + n * ((j % n + n) % n); }
};

}  // namespace gapsol
