#pragma once

#include "gapsol/common.hpp"

#include <array>

namespace gapsol {

// Complex 3-vector field sampled on an n1 x n2 periodic grid, one array per
// Cartesian component.
struct VectorField {
  std::array<Eigen::ArrayXXcd, 3> c;

  VectorField() = default;
  VectorField(int n1, int n2) {
    for (auto& a : c) a = Eigen::ArrayXXcd::Zero(n1, n2);
  }

  int n1() const { return static_cast<int>(c[0].rows()); }
  int n2() const { return static_cast<int>(c[0].cols()); }
  Eigen::Index points() const { return c[0].size(); }

  Eigen::ArrayXXcd& operator[](int a) { return c[a]; }
  const Eigen::ArrayXXcd& operator[](int a) const { return c[a]; }

  VectorField& operator+=(const VectorField& o) {
    for (int a = 0; a < 3; ++a) c[a] += o.c[a];
    return *this;
  }
  VectorField& operator-=(const VectorField& o) {
    for (int a = 0; a < 3; ++a) c[a] -= o.c[a];
    return *this;
  }
  VectorField& operator*=(cdouble s) {
    for (auto& a : c) a *= s;
    return *this;
  }
  // this += s * o
  void axpy(cdouble s, const VectorField& o) {
    for (int a = 0; a < 3; ++a) c[a] += s * o.c[a];
  }

  double sum_abs2() const {
    double s = 0.0;
    for (const auto& a : c) s += a.abs2().sum();
    return s;
  }
  double max_abs() const {
    Eigen::ArrayXXd m = c[0].abs2() + c[1].abs2() + c[2].abs2();
    return std::sqrt(m.maxCoeff());
  }
};

inline VectorField operator+(VectorField a, const VectorField& b) { return a += b; }
inline VectorField operator-(VectorField a, const VectorField& b) { return a -= b; }
inline VectorField operator*(cdouble s, VectorField a) { return a *= s; }

// Real inner product Re sum conj(a).b, the natural one for real-linear maps.
inline double real_dot(const VectorField& a, const VectorField& b) {
  double s = 0.0;
  for (int k = 0; k < 3; ++k) s += (a.c[k].conjugate() * b.c[k]).real().sum();
  return s;
}

// Sesquilinear sum_x a(x).conj(b(x)) without quadrature weight.
inline cdouble grid_dot(const VectorField& a, const VectorField& b) {
  cdouble s = 0.0;
  for (int k = 0; k < 3; ++k) s += (a.c[k] * b.c[k].conjugate()).sum();
  return s;
}

// A(-x) on a periodic grid whose slot 0 is the origin.
inline Eigen::ArrayXXcd reflect(const Eigen::ArrayXXcd& f) {
  const Eigen::Index n1 = f.rows(), n2 = f.cols();
  Eigen::ArrayXXcd r(n1, n2);
  for (Eigen::Index j = 0; j < n2; ++j)
    for (Eigen::Index i = 0; i < n1; ++i) r((n1 - i) % n1, (n2 - j) % n2) = f(i, j);
  return r;
}

inline Eigen::ArrayXXd reflect(const Eigen::ArrayXXd& f) {
  const Eigen::Index n1 = f.rows(), n2 = f.cols();
  Eigen::ArrayXXd r(n1, n2);
  for (Eigen::Index j = 0; j < n2; ++j)
    for (Eigen::Index i = 0; i < n1; ++i) r((n1 - i) % n1, (n2 - j) % n2) = f(i, j);
  return r;
}

inline VectorField reflect(const VectorField& f) {
  VectorField r;
  for (int a = 0; a < 3; ++a) r.c[a] = reflect(f.c[a]);
  return r;
}

inline VectorField conj(const VectorField& f) {
  VectorField r;
  for (int a = 0; a < 3; ++a) r.c[a] = f.c[a].conjugate();
  return r;
}

// Relative PT defect max|f(-x) - conj f(x)| / max|f|.
inline double pt_defect(const VectorField& f) {
  const double m = f.max_abs();
  if (m == 0.0) return 0.0;
  return (reflect(f) - conj(f)).max_abs() / m;
}

// Projection onto the PT-symmetric subspace: (f + conj f(-x))/2.
inline VectorField pt_project(const VectorField& f) {
  VectorField r = conj(reflect(f));
  r += f;
  r *= 0.5;
  return r;
}

}  // namespace gapsol
