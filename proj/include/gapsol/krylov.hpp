#pragma once

#include "gapsol/common.hpp"

#include <functional>

namespace gapsol {

// Real-linear operators on complex vectors, with the real inner product
// Re <x, y>; the Krylov recurrences are therefore real.
using LinearMap = std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>;

inline double rdot(const Eigen::VectorXcd& x, const Eigen::VectorXcd& y) { return x.dot(y).real(); }

struct KrylovResult {
  Eigen::VectorXcd x;
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
  std::vector<double> history;
};

struct GmresOptions {
  int restart = 40;
  int max_iter = 400;
  double rtol = 1e-10;
};

// Right-preconditioned restarted GMRES for a x = b; `precond` may be empty.
inline KrylovResult gmres(const LinearMap& a, const Eigen::VectorXcd& b, const LinearMap& precond,
                          const GmresOptions& opt = {}, const LinearMap& project = {}) {
  KrylovResult res;
  const Eigen::Index n = b.size();
  res.x = Eigen::VectorXcd::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }
  auto pre = [&](const Eigen::VectorXcd& v) { return precond ? precond(v) : v; };
  auto proj = [&](Eigen::VectorXcd v) { return project ? project(v) : v; };
  Eigen::VectorXcd r = b;
  int total = 0;
  while (total < opt.max_iter) {
    const double beta = r.norm();
    res.rel_residual = beta / bnorm;
    res.history.push_back(res.rel_residual);
    if (res.rel_residual <= opt.rtol) {
      res.converged = true;
      break;
    }
    const int m = std::min(opt.restart, opt.max_iter - total);
    std::vector<Eigen::VectorXcd> v;
    v.reserve(m + 1);
    v.push_back(r / beta);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m + 1, m);
    Eigen::VectorXd cs = Eigen::VectorXd::Zero(m), sn = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(m + 1);
    g(0) = beta;
    int k = 0;
    for (; k < m; ++k) {
      Eigen::VectorXcd w = proj(a(pre(v[k])));
      for (int i = 0; i <= k; ++i) {
        h(i, k) = rdot(v[i], w);
        w -= h(i, k) * v[i];
      }
      // one reorthogonalization pass
      for (int i = 0; i <= k; ++i) {
        const double c = rdot(v[i], w);
        h(i, k) += c;
        w -= c * v[i];
      }
      h(k + 1, k) = w.norm();
      for (int i = 0; i < k; ++i) {
        const double t = cs(i) * h(i, k) + sn(i) * h(i + 1, k);
        h(i + 1, k) = -sn(i) * h(i, k) + cs(i) * h(i + 1, k);
        h(i, k) = t;
      }
      const double den = std::hypot(h(k, k), h(k + 1, k));
      if (den == 0.0) throw std::runtime_error("gmres: breakdown (zero Hessenberg column)");
      cs(k) = h(k, k) / den;
      sn(k) = h(k + 1, k) / den;
      const double hk1 = h(k + 1, k);
      h(k, k) = den;
      h(k + 1, k) = 0.0;
      g(k + 1) = -sn(k) * g(k);
      g(k) = cs(k) * g(k);
      ++total;
      const double est = std::abs(g(k + 1)) / bnorm;
      res.history.push_back(est);
      if (est <= opt.rtol || hk1 <= 1e-14 * bnorm) {
        ++k;
        break;
      }
      v.push_back(w / hk1);
    }
    const Eigen::VectorXd y = h.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    Eigen::VectorXcd z = Eigen::VectorXcd::Zero(n);
    for (int i = 0; i < k; ++i) z += y(i) * v[i];
    res.x += proj(pre(z));
    r = proj(b - a(res.x));
  }
  res.iterations = total;
  if (!res.converged) {
    res.rel_residual = r.norm() / bnorm;
    res.converged = res.rel_residual <= opt.rtol;
  }
  return res;
}

struct CgOptions {
  int max_iter = 2000;
  double rtol = 1e-12;
};

// Preconditioned conjugate gradients for a symmetric positive operator.
inline KrylovResult pcg(const LinearMap& a, const Eigen::VectorXcd& b, const LinearMap& precond, const CgOptions& opt = {}) {
  KrylovResult res;
  res.x = Eigen::VectorXcd::Zero(b.size());
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }
  Eigen::VectorXcd r = b;
  Eigen::VectorXcd z = precond ? precond(r) : r;
  Eigen::VectorXcd p = z;
  double rz = rdot(r, z);
  for (int it = 0; it < opt.max_iter; ++it) {
    const Eigen::VectorXcd ap = a(p);
    const double pap = rdot(p, ap);
    if (!(pap > 0)) throw std::runtime_error("pcg: operator not positive on the Krylov space");
    const double alpha = rz / pap;
    res.x += alpha * p;
    r -= alpha * ap;
    res.iterations = it + 1;
    res.rel_residual = r.norm() / bnorm;
    res.history.push_back(res.rel_residual);
    if (res.rel_residual <= opt.rtol) {
      res.converged = true;
      return res;
    }
    z = precond ? precond(r) : r;
    const double rz_new = rdot(r, z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  return res;
}

}  // namespace gapsol
