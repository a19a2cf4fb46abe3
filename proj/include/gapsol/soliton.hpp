#pragma once

#include "gapsol/bloch.hpp"
#include "gapsol/cme.hpp"
#include "gapsol/fft.hpp"
#include "gapsol/field.hpp"
#include "gapsol/krylov.hpp"
#include "gapsol/lattice.hpp"
#include "gapsol/medium.hpp"
#include "gapsol/parallel.hpp"

#include <Eigen/LU>
#include <numeric>
#include <optional>

namespace gapsol {

// ---------------------------------------------------------------------------
// Supercell geometry

struct Commensuration {
  int denominator = 1;
  double error = 0.0;
};

// Smallest q <= max_q with |c - p/q| <= tol, by continued fractions; the best
// approximant found is returned with its error if none meets tol.
inline Commensuration rational_denominator(double c, int max_q = 1000, double tol = 1e-8) {
  double x = c;
  long p0 = 1, q0 = 0, p1 = static_cast<long>(std::floor(x)), q1 = 1;
  Commensuration best{1, std::abs(c - std::round(c))};
  if (best.error <= tol) return best;
  double frac = x - std::floor(x);
  for (int it = 0; it < 64 && frac > 1e-15; ++it) {
    x = 1.0 / frac;
    const long a = static_cast<long>(std::floor(x));
    frac = x - a;
    const long p2 = a * p1 + p0, q2 = a * q1 + q0;
    if (q2 > max_q) break;
    p0 = p1;
    q0 = q1;
    p1 = p2;
    q1 = q2;
    const double err = std::abs(c - static_cast<double>(p1) / q1);
    best = {static_cast<int>(q1), err};
    if (err <= tol) break;
  }
  return best;
}

struct SupercellGrid {
  Lattice lattice;
  int S = 1;        // cells per direction
  int nc = 15;      // samples per cell and direction
  double eps_param = 0.1;
  double omega_star = 0.0;
  int Omega = -1;
  double commensuration_error = 0.0;

  double omega() const { return omega_star + Omega * eps_param * eps_param; }
  int n() const { return S * nc; }
  Vec2 A1() const { return S * lattice.a1(); }
  Vec2 A2() const { return S * lattice.a2(); }
  double area() const { return S * S * lattice.cell_area(); }
  double point_weight() const { return area() / (static_cast<double>(n()) * n()); }

  // Sample position with coordinates centred on the origin (minimum image in
  // the fractional supercell coordinates).
  Vec2 point(int i, int j) const {
    const int N = n();
    return (static_cast<double>(signed_index(i, N)) / N) * A1() + (static_cast<double>(signed_index(j, N)) / N) * A2();
  }
  Vec2 frequency(int i, int j) const {
    const int N = n();
    return (static_cast<double>(signed_index(i, N)) / S) * lattice.b1() + (static_cast<double>(signed_index(j, N)) / S) * lattice.b2();
  }
  // Distance between opposite supercell sides, the smaller of the two.
  double inner_width() const { return std::min(area() / A1().norm(), area() / A2().norm()); }

  // Smallest admissible S with S * inner_width(cell) * eps_param >= coverage and
  // every k on the supercell reciprocal grid; odd S preferred.
  static SupercellGrid make(const Lattice& lat, int nc, double eps_param, double omega_star, int Omega, double coverage,
                            const std::vector<Vec2>& kpoints = {}, int max_q = 1000) {
    if (nc < 3 || nc % 2 == 0) throw std::invalid_argument("SupercellGrid: per-cell resolution must be odd and >= 3");
    if (!(eps_param > 0 && eps_param < 0.5)) throw std::invalid_argument("SupercellGrid: eps_param must lie in (0, 0.5)");
    SupercellGrid g;
    g.lattice = lat;
    g.nc = nc;
    g.eps_param = eps_param;
    g.omega_star = omega_star;
    g.Omega = Omega;
    int lcm = 1;
    double err = 0.0;
    for (const auto& k : kpoints) {
      const Vec2 c = lat.to_reciprocal_coords(k);
      for (int d = 0; d < 2; ++d) {
        const Commensuration r = rational_denominator(c(d), max_q);
        lcm = std::lcm(lcm, r.denominator);
        err = std::max(err, r.error);
      }
    }
    const double cell_width = std::min(lat.cell_area() / lat.a1().norm(), lat.cell_area() / lat.a2().norm());
    const int smin = std::max(1, static_cast<int>(std::ceil(coverage / (cell_width * eps_param) - 1e-12)));
    int S = lcm * ((smin + lcm - 1) / lcm);
    if (lcm % 2 == 1 && S % 2 == 0) S += lcm;
    g.S = S;
    g.commensuration_error = err;
    return g;
  }
};

// ---------------------------------------------------------------------------
// Kerr nonlinearity

inline int tile(int i, int nc) { return i % nc; }

// F_d(u) = sum_{abc} chi_sym_{abcd} u_a u_b conj(u_c), chi tiled periodically.
inline VectorField kerr(const VectorField& u, const SusceptibilityField& chi) {
  const int n1 = u.n1(), n2 = u.n2();
  const int c1 = chi.n1(), c2 = chi.n2();
  if (n1 % c1 != 0 || n2 % c2 != 0) throw std::invalid_argument("kerr: field grid is not a multiple of the chi grid");
  VectorField f(n1, n2);
  if (chi.isotropic_profile()) {
    const Eigen::ArrayXXd& x0 = *chi.isotropic_profile();
    for (int j = 0; j < n2; ++j)
      for (int i = 0; i < n1; ++i) {
        const double c = x0(tile(i, c1), tile(j, c2));
        const Vec3c v(u[0](i, j), u[1](i, j), u[2](i, j));
        const cdouble uu = v.transpose() * v;
        const double uub = v.squaredNorm();
        for (int a = 0; a < 3; ++a) f[a](i, j) = c * (uu * std::conj(v(a)) + 2.0 * uub * v(a));
      }
    return f;
  }
  std::array<Eigen::ArrayXXd, 81> t;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c)
        for (int d = 0; d < 3; ++d) t[a * 27 + b * 9 + c * 3 + d] = chi.symmetrized(a, b, c, d);
  for (int j = 0; j < n2; ++j)
    for (int i = 0; i < n1; ++i) {
      const int ti = tile(i, c1), tj = tile(j, c2);
      for (int d = 0; d < 3; ++d) {
        cdouble s = 0.0;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 3; ++c) s += t[a * 27 + b * 9 + c * 3 + d](ti, tj) * u[a](i, j) * u[b](i, j) * std::conj(u[c](i, j));
        f[d](i, j) = s;
      }
    }
  return f;
}

// Real-linear derivative DF(u) delta.
inline VectorField kerr_derivative(const VectorField& u, const VectorField& du, const SusceptibilityField& chi) {
  const int n1 = u.n1(), n2 = u.n2();
  const int c1 = chi.n1(), c2 = chi.n2();
  VectorField f(n1, n2);
  if (chi.isotropic_profile()) {
    const Eigen::ArrayXXd& x0 = *chi.isotropic_profile();
    for (int j = 0; j < n2; ++j)
      for (int i = 0; i < n1; ++i) {
        const double c = x0(tile(i, c1), tile(j, c2));
        const Vec3c v(u[0](i, j), u[1](i, j), u[2](i, j));
        const Vec3c d(du[0](i, j), du[1](i, j), du[2](i, j));
        const cdouble uu = v.transpose() * v, ud = v.transpose() * d;
        const cdouble udb = v.dot(d);  // conj(u).d
        const double uub = v.squaredNorm();
        for (int a = 0; a < 3; ++a)
          f[a](i, j) = c * (2.0 * ud * std::conj(v(a)) + uu * std::conj(d(a)) + 2.0 * (udb + std::conj(udb)) * v(a) + 2.0 * uub * d(a));
      }
    return f;
  }
  std::array<Eigen::ArrayXXd, 81> t;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c)
        for (int d = 0; d < 3; ++d) t[a * 27 + b * 9 + c * 3 + d] = chi.symmetrized(a, b, c, d);
  for (int j = 0; j < n2; ++j)
    for (int i = 0; i < n1; ++i) {
      const int ti = tile(i, c1), tj = tile(j, c2);
      for (int d = 0; d < 3; ++d) {
        cdouble s = 0.0;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 3; ++c) {
              const double x = t[a * 27 + b * 9 + c * 3 + d](ti, tj);
              if (x == 0.0) continue;
              s += x * (du[a](i, j) * u[b](i, j) * std::conj(u[c](i, j)) + u[a](i, j) * du[b](i, j) * std::conj(u[c](i, j)) +
                        u[a](i, j) * u[b](i, j) * std::conj(du[c](i, j)));
            }
        f[d](i, j) = s;
      }
    }
  return f;
}

// ---------------------------------------------------------------------------
// Maxwell operator on the supercell

class MaxwellSupercell {
 public:
  // eps_cell and chi live on the nc x nc cell grid and are tiled.
  MaxwellSupercell(SupercellGrid grid, Eigen::ArrayXXd eps_cell, SusceptibilityField chi, double kappa)
      : grid_(std::move(grid)), eps_cell_(std::move(eps_cell)), chi_(std::move(chi)), kappa_(kappa) {
    if (eps_cell_.rows() != grid_.nc || eps_cell_.cols() != grid_.nc)
      throw std::invalid_argument("MaxwellSupercell: eps grid differs from the per-cell resolution");
    if (chi_.n1() != grid_.nc || chi_.n2() != grid_.nc)
      throw std::invalid_argument("MaxwellSupercell: chi grid differs from the per-cell resolution");
    if (kappa == 0.0) throw std::invalid_argument("MaxwellSupercell: kappa must be nonzero");
    const int N = grid_.n();
    eps_ = Eigen::ArrayXXd(N, N);
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < N; ++i) eps_(i, j) = eps_cell_(tile(i, grid_.nc), tile(j, grid_.nc));
    kt_.resize(static_cast<size_t>(N) * N);
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < N; ++i) {
        const Vec2 q = grid_.frequency(i, j);
        kt_[i + static_cast<size_t>(N) * j] = Vec3(q.x(), q.y(), kappa_);
      }
  }

  const SupercellGrid& grid() const { return grid_; }
  const Eigen::ArrayXXd& eps() const { return eps_; }
  const Eigen::ArrayXXd& eps_cell() const { return eps_cell_; }
  const SusceptibilityField& chi() const { return chi_; }
  double kappa() const { return kappa_; }
  const Vec3& ktilde(int i, int j) const { return kt_[i + static_cast<size_t>(grid_.n()) * j]; }

  VectorField transform(const VectorField& u) const {
    VectorField h;
    for (int a = 0; a < 3; ++a) h[a] = fft_forward(u[a]);
    return h;
  }
  VectorField inverse(const VectorField& h) const {
    VectorField u;
    for (int a = 0; a < 3; ++a) u[a] = fft_backward(h[a]);
    return u;
  }

  // curl' curl' u with curl' = (d1, d2, i kappa) x, spectral.
  VectorField curlcurl(const VectorField& u) const {
    VectorField h = transform(u);
    const int N = grid_.n();
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < N; ++i) {
        const Vec3& k = ktilde(i, j);
        const Vec3c v(h[0](i, j), h[1](i, j), h[2](i, j));
        const Vec3c r = k.squaredNorm() * v - k.cast<cdouble>() * (k.cast<cdouble>().transpose() * v)(0);
        for (int a = 0; a < 3; ++a) h[a](i, j) = r(a);
      }
    return inverse(h);
  }

  VectorField apply_linear(const VectorField& u, double omega) const {
    VectorField r = curlcurl(u);
    for (int a = 0; a < 3; ++a) r[a] -= omega * omega * eps_ * u[a];
    return r;
  }

  // R = curl' curl' u - omega^2 eps u - omega^2 F(u)
  VectorField residual(const VectorField& u, double omega, bool nonlinear = true) const {
    VectorField r = apply_linear(u, omega);
    if (nonlinear) r.axpy(-omega * omega, kerr(u, chi_));
    return r;
  }

  VectorField jacobian(const VectorField& u, const VectorField& du, double omega) const {
    VectorField r = apply_linear(du, omega);
    r.axpy(-omega * omega, kerr_derivative(u, du, chi_));
    return r;
  }

  // h = -(i/omega) curl' u
  VectorField magnetic_field(const VectorField& u, double omega) const {
    if (!(omega > 0)) throw std::invalid_argument("magnetic_field: omega must be positive");
    VectorField h = transform(u);
    const int N = grid_.n();
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < N; ++i) {
        const Vec3c k = ktilde(i, j).cast<cdouble>();
        const Vec3c v(h[0](i, j), h[1](i, j), h[2](i, j));
        const Vec3c r = (-kI / omega) * (kI * k).cross(v);
        for (int a = 0; a < 3; ++a) h[a](i, j) = r(a);
      }
    return inverse(h);
  }

  Eigen::ArrayXXcd divergence(const VectorField& f) const {
    const VectorField h = transform(f);
    const int N = grid_.n();
    Eigen::ArrayXXcd d(N, N);
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < N; ++i) {
        const Vec3& k = ktilde(i, j);
        d(i, j) = kI * (k(0) * h[0](i, j) + k(1) * h[1](i, j) + k(2) * h[2](i, j));
      }
    return fft_backward(d);
  }

  VectorField curl(const VectorField& f) const {
    VectorField h = transform(f);
    const int N = grid_.n();
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < N; ++i) {
        const Vec3c k = ktilde(i, j).cast<cdouble>();
        const Vec3c v(h[0](i, j), h[1](i, j), h[2](i, j));
        const Vec3c r = (kI * k).cross(v);
        for (int a = 0; a < 3; ++a) h[a](i, j) = r(a);
      }
    return inverse(h);
  }

  double l2_norm(const VectorField& f) const { return std::sqrt(f.sum_abs2() * grid_.point_weight()); }

  // sqrt(|Omega_S| sum_xi (1 + |xi|^2)^2 |f_hat(xi)|^2), xi the in-plane frequency.
  double h2_norm(const VectorField& f) const {
    const VectorField h = transform(f);
    const int N = grid_.n();
    double s = 0.0;
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < N; ++i) {
        const Vec3& k = ktilde(i, j);
        const double w = 1.0 + k(0) * k(0) + k(1) * k(1);
        s += w * w * (std::norm(h[0](i, j)) + std::norm(h[1](i, j)) + std::norm(h[2](i, j)));
      }
    return std::sqrt(s * grid_.area());
  }

  // eps independent of the second fractional coordinate
  bool layered() const {
    for (int j = 1; j < eps_cell_.cols(); ++j)
      if ((eps_cell_.col(j) - eps_cell_.col(0)).abs().maxCoeff() > 1e-14 * eps_cell_.abs().maxCoeff()) return false;
    return true;
  }

 private:
  SupercellGrid grid_;
  Eigen::ArrayXXd eps_cell_;
  SusceptibilityField chi_;
  double kappa_;
  Eigen::ArrayXXd eps_;
  std::vector<Vec3> kt_;
};

inline Eigen::VectorXcd flatten(const VectorField& f) {
  const Eigen::Index m = f.points();
  Eigen::VectorXcd v(3 * m);
  for (int a = 0; a < 3; ++a) v.segment(a * m, m) = Eigen::Map<const Eigen::VectorXcd>(f[a].data(), m);
  return v;
}

inline VectorField unflatten(const Eigen::VectorXcd& v, int n1, int n2) {
  VectorField f(n1, n2);
  const Eigen::Index m = static_cast<Eigen::Index>(n1) * n2;
  for (int a = 0; a < 3; ++a) Eigen::Map<Eigen::VectorXcd>(f[a].data(), m) = v.segment(a * m, m);
  return f;
}

// Exact inverse of curl'curl' - omega^2 eps for layered media (eps depending on
// the first fractional coordinate only): the operator splits into blocks of
// size 3 nc, one per (residue of m mod S, n). Otherwise a Fourier-diagonal
// inverse with the cell-mean permittivity.
class SupercellPreconditioner {
 public:
  SupercellPreconditioner(const MaxwellSupercell& op, double omega, int threads = 1)
      : op_(op), omega_(omega), threads_(threads), exact_(op.layered()) {
    const auto& g = op.grid();
    const int N = g.n(), S = g.S, nc = g.nc;
    if (exact_) {
      Eigen::ArrayXXcd e1 = fft_forward(Eigen::ArrayXXcd(op.eps_cell().col(0).cast<cdouble>()));
      eps_hat_ = e1.col(0);
      lu_.resize(static_cast<size_t>(S) * N);
      parallel_for(S * N, threads_, [&](int b) {
        const int r = b % S, n = b / S;
        Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(3 * nc, 3 * nc);
        for (int p = 0; p < nc; ++p) {
          const int slot = (r + S * p) % N;
          const Vec3& k = op.ktilde(slot, n);
          const Eigen::Matrix3d c = k.squaredNorm() * Eigen::Matrix3d::Identity() - k * k.transpose();
          m.block(3 * p, 3 * p, 3, 3) += c.cast<cdouble>();
          for (int q = 0; q < nc; ++q) {
            const cdouble e = eps_hat_((p - q + nc) % nc);
            for (int a = 0; a < 3; ++a) m(3 * p + a, 3 * q + a) -= omega * omega * e;
          }
        }
        lu_[b] = Eigen::PartialPivLU<Eigen::MatrixXcd>(m);
      });
    } else {
      mean_eps_ = op.eps_cell().mean();
    }
  }

  bool exact() const { return exact_; }

  VectorField apply(const VectorField& f) const {
    const auto& g = op_.grid();
    const int N = g.n(), S = g.S, nc = g.nc;
    VectorField h = op_.transform(f);
    if (exact_) {
      parallel_for(S * N, threads_, [&](int b) {
        const int r = b % S, n = b / S;
        Eigen::VectorXcd v(3 * nc);
        for (int p = 0; p < nc; ++p) {
          const int slot = (r + S * p) % N;
          for (int a = 0; a < 3; ++a) v(3 * p + a) = h[a](slot, n);
        }
        const Eigen::VectorXcd x = lu_[b].solve(v);
        for (int p = 0; p < nc; ++p) {
          const int slot = (r + S * p) % N;
          for (int a = 0; a < 3; ++a) h[a](slot, n) = x(3 * p + a);
        }
      });
    } else {
      for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i) {
          const Vec3& k = op_.ktilde(i, j);
          const Eigen::Matrix3d c =
              k.squaredNorm() * Eigen::Matrix3d::Identity() - k * k.transpose() - omega_ * omega_ * mean_eps_ * Eigen::Matrix3d::Identity();
          const Vec3c v(h[0](i, j), h[1](i, j), h[2](i, j));
          const Vec3c x = c.cast<cdouble>().partialPivLu().solve(v);
          for (int a = 0; a < 3; ++a) h[a](i, j) = x(a);
        }
    }
    return op_.inverse(h);
  }

 private:
  const MaxwellSupercell& op_;
  double omega_;
  int threads_;
  bool exact_;
  Eigen::VectorXcd eps_hat_;
  double mean_eps_ = 1.0;
  std::vector<Eigen::PartialPivLU<Eigen::MatrixXcd>> lu_;
};

// ---------------------------------------------------------------------------
// Generic Newton-Krylov on real-linear maps

struct NewtonKrylovOptions {
  int max_iter = 30;
  double rtol = 1e-9;  // ||F(x)|| <= rtol ||x||
  double atol = 1e-300;
  GmresOptions gmres{40, 800, 1e-11};
  double gmres_fail = 1e-6;  // accepted relative linear residual if gmres stalls
  int diverge_steps = 3;
};

struct NewtonKrylovReport {
  std::vector<double> residuals;
  std::vector<int> gmres_iterations;
  int iterations = 0;
};

struct NewtonKrylovProblem {
  std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)> residual;
  std::function<LinearMap(const Eigen::VectorXcd&)> jacobian;
  LinearMap precond;
  LinearMap project;
  std::function<double(const Eigen::VectorXcd&)> norm;
};

inline Eigen::VectorXcd newton_krylov(const NewtonKrylovProblem& pb, Eigen::VectorXcd x, const NewtonKrylovOptions& opt = {},
                                      NewtonKrylovReport* report = nullptr) {
  NewtonKrylovReport rep;
  auto proj = [&](const Eigen::VectorXcd& v) { return pb.project ? pb.project(v) : v; };
  x = proj(x);
  Eigen::VectorXcd f = proj(pb.residual(x));
  double r = pb.norm(f);
  rep.residuals.push_back(r);
  int increases = 0;
  for (int it = 0;; ++it) {
    if (r <= std::max(opt.rtol * pb.norm(x), opt.atol)) {
      rep.iterations = it;
      break;
    }
    if (it == opt.max_iter) {
      if (report) *report = rep;
      throw ConvergenceError("newton_krylov: no convergence in " + std::to_string(opt.max_iter) + " iterations", rep.residuals);
    }
    const LinearMap J = pb.jacobian(x);
    const KrylovResult kr = gmres(J, -f, pb.precond, opt.gmres, pb.project);
    rep.gmres_iterations.push_back(kr.iterations);
    if (!kr.converged && kr.rel_residual > opt.gmres_fail) {
      if (report) *report = rep;
      throw ConvergenceError("newton_krylov: linear solve failed (relative residual " + std::to_string(kr.rel_residual) +
                                 "); omega may be too close to the spectrum, check its placement inside the gap",
                             rep.residuals);
    }
    double lambda = 1.0;
    Eigen::VectorXcd xt = proj(x + kr.x);
    Eigen::VectorXcd ft = proj(pb.residual(xt));
    double rt = pb.norm(ft);
    for (int ls = 0; ls < 8 && rt > r; ++ls) {
      lambda *= 0.5;
      xt = proj(x + lambda * kr.x);
      ft = proj(pb.residual(xt));
      rt = pb.norm(ft);
    }
    increases = rt > r ? increases + 1 : 0;
    rep.residuals.push_back(rt);
    if (increases >= opt.diverge_steps) {
      if (report) *report = rep;
      throw ConvergenceError("newton_krylov: residual increased over " + std::to_string(opt.diverge_steps) + " consecutive steps",
                             rep.residuals);
    }
    x = xt;
    f = ft;
    r = rt;
  }
  if (report) *report = rep;
  return x;
}

// ---------------------------------------------------------------------------
// Ansatz and corrector

struct SolitonDiagnostics {
  double res_l2 = 0.0, res_h2 = 0.0;          // residual of the ansatz
  double corr_res_l2 = 0.0;                   // residual after correction
  double err_l2 = 0.0, err_h2 = 0.0;          // ||u_corr - u_ans||
  double ans_l2 = 0.0, ans_h2 = 0.0;
  double pt_defect = 0.0;
  int newton_iters = 0;
  std::vector<int> gmres_iters;
};

struct GapSolitonApprox {
  SupercellGrid grid;
  VectorField u;
  std::optional<VectorField> u_corr;
  std::optional<VectorField> h;
  SolitonDiagnostics diag;

  static Eigen::ArrayXXd intensity(const VectorField& f) { return f[0].abs2() + f[1].abs2() + f[2].abs2(); }
};

namespace detail {

// e^{i pi m (y + L)/L} for the signed frequencies of an M-point grid, the
// Nyquist column replaced by its cosine so real data interpolate to real data.
inline Eigen::RowVectorXcd envelope_modes(double y, int M, double L) {
  Eigen::RowVectorXcd e(M);
  const double t = kPi * (y + L) / L;
  for (int s = 0; s < M; ++s) {
    const int m = signed_index(s, M);
    e(s) = (M % 2 == 0 && 2 * std::abs(m) == M) ? cdouble(std::cos(t * m), 0.0) : std::polar(1.0, t * m);
  }
  return e;
}

}  // namespace detail

// Spectral interpolant of one envelope component at arbitrary y (zero outside
// the box).
inline cdouble interpolate_envelope(const Eigen::ArrayXXcd& a_hat, double L, const Vec2& y) {
  if (std::abs(y.x()) > L || std::abs(y.y()) > L) return 0.0;
  const int M = static_cast<int>(a_hat.rows());
  const Eigen::RowVectorXcd e1 = detail::envelope_modes(y.x(), M, L), e2 = detail::envelope_modes(y.y(), M, L);
  return (e1 * a_hat.matrix() * e2.transpose())(0, 0);
}

// u_ans(x) = eps sum_j A_j(eps x) p_j(x) e^{i k_j.x} on the supercell.
inline GapSolitonApprox assemble_ansatz(const SupercellGrid& grid, const std::vector<BlochEigenpair>& pairs, const EnvelopeState& A,
                                        double coverage = -1.0, int threads = 1) {
  if (static_cast<int>(pairs.size()) != A.N) throw std::invalid_argument("assemble_ansatz: need one Bloch pair per envelope");
  for (const auto& p : pairs)
    if (p.p.n1() != grid.nc || p.p.n2() != grid.nc)
      throw std::invalid_argument("assemble_ansatz: Bloch profile grid differs from the per-cell resolution");
  if (coverage < 0) coverage = 2.0 * A.L;
  const double have = grid.inner_width() * grid.eps_param;
  if (have < coverage * (1 - 1e-12)) {
    const double cw = grid.inner_width() / grid.S;
    const int need = static_cast<int>(std::ceil(coverage / (cw * grid.eps_param)));
    throw std::invalid_argument("assemble_ansatz: envelope box exceeds the supercell; need S >= " + std::to_string(need) +
                                " (have " + std::to_string(grid.S) + ")");
  }
  for (const auto& p : pairs) {
    const Vec2 c = grid.lattice.to_reciprocal_coords(p.k) * grid.S;
    if ((c - c.array().round().matrix()).cwiseAbs().maxCoeff() > 1e-6)
      throw std::invalid_argument("assemble_ansatz: k point is not on the supercell reciprocal grid");
  }
  const int N = grid.n(), M = A.M;
  const double e = grid.eps_param;
  GapSolitonApprox out;
  out.grid = grid;
  out.u = VectorField(N, N);
  std::vector<Eigen::ArrayXXcd> hats;
  for (const auto& a : A.A) hats.push_back(fft_forward(a));
  const Lattice& lat = grid.lattice;
  const bool separable = std::abs(lat.a1().y()) < 1e-14 * lat.a1().norm() && std::abs(lat.a2().x()) < 1e-14 * lat.a2().norm();
  std::vector<Eigen::ArrayXXcd> env(A.N, Eigen::ArrayXXcd::Zero(N, N));
  if (separable) {
    Eigen::MatrixXcd E1 = Eigen::MatrixXcd::Zero(N, M), E2 = Eigen::MatrixXcd::Zero(N, M);
    for (int i = 0; i < N; ++i) {
      const Vec2 x = grid.point(i, 0);
      if (std::abs(e * x.x()) <= A.L) E1.row(i) = detail::envelope_modes(e * x.x(), M, A.L);
      const Vec2 x2 = grid.point(0, i);
      if (std::abs(e * x2.y()) <= A.L) E2.row(i) = detail::envelope_modes(e * x2.y(), M, A.L);
    }
    for (int j = 0; j < A.N; ++j) env[j] = (E1 * hats[j].matrix() * E2.transpose()).array();
  } else {
    parallel_for(N, threads, [&](int jj) {
      for (int ii = 0; ii < N; ++ii) {
        const Vec2 y = e * grid.point(ii, jj);
        for (int j = 0; j < A.N; ++j) env[j](ii, jj) = interpolate_envelope(hats[j], A.L, y);
      }
    });
  }
  for (int j = 0; j < A.N; ++j) {
    const auto& p = pairs[j];
    for (int jj = 0; jj < N; ++jj)
      for (int ii = 0; ii < N; ++ii) {
        const cdouble w = e * env[j](ii, jj) * std::polar(1.0, p.k.dot(grid.point(ii, jj)));
        if (w == 0.0) continue;
        const int ti = tile(ii, grid.nc), tj = tile(jj, grid.nc);
        for (int a = 0; a < 3; ++a) out.u[a](ii, jj) += w * p.p[a](ti, tj);
      }
  }
  return out;
}

struct CorrectorOptions {
  NewtonKrylovOptions newton;
  bool enforce_pt = true;
  int threads = 1;
};

// Newton corrector for curl'curl'u - omega^2 eps u - omega^2 F(u) = 0 started
// from the ansatz; fills u_corr, h and the diagnostics.
inline void newton_correct(GapSolitonApprox& s, const MaxwellSupercell& op, const CorrectorOptions& opt = {},
                           NewtonKrylovReport* report = nullptr) {
  const double omega = s.grid.omega();
  const int N = s.grid.n();
  if (N != op.grid().n()) throw std::invalid_argument("newton_correct: operator grid differs from the ansatz grid");
  const SupercellPreconditioner pre(op, omega, opt.threads);
  NewtonKrylovProblem pb;
  pb.residual = [&](const Eigen::VectorXcd& v) { return flatten(op.residual(unflatten(v, N, N), omega)); };
  pb.jacobian = [&](const Eigen::VectorXcd& v) -> LinearMap {
    auto u = std::make_shared<VectorField>(unflatten(v, N, N));
    return [&op, u, omega, N](const Eigen::VectorXcd& d) { return flatten(op.jacobian(*u, unflatten(d, N, N), omega)); };
  };
  pb.precond = [&](const Eigen::VectorXcd& v) { return flatten(pre.apply(unflatten(v, N, N))); };
  if (opt.enforce_pt) pb.project = [N](const Eigen::VectorXcd& v) { return flatten(pt_project(unflatten(v, N, N))); };
  pb.norm = [&](const Eigen::VectorXcd& v) { return op.l2_norm(unflatten(v, N, N)); };
  NewtonKrylovReport rep;
  const Eigen::VectorXcd x = newton_krylov(pb, flatten(s.u), opt.newton, &rep);
  s.u_corr = unflatten(x, N, N);
  if (omega > 0) s.h = op.magnetic_field(*s.u_corr, omega);
  const VectorField r0 = op.residual(s.u, omega);
  s.diag.res_l2 = op.l2_norm(r0);
  s.diag.res_h2 = op.h2_norm(r0);
  s.diag.corr_res_l2 = op.l2_norm(op.residual(*s.u_corr, omega));
  const VectorField d = *s.u_corr - s.u;
  s.diag.err_l2 = op.l2_norm(d);
  s.diag.err_h2 = op.h2_norm(d);
  s.diag.ans_l2 = op.l2_norm(s.u);
  s.diag.ans_h2 = op.h2_norm(s.u);
  s.diag.pt_defect = pt_defect(*s.u_corr);
  s.diag.newton_iters = rep.iterations;
  s.diag.gmres_iters = rep.gmres_iterations;
  if (report) *report = rep;
}

// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need at least two points");
  const size_t n = x.size();
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

// ---------------------------------------------------------------------------
// Scalar 1D model on the same Newton-Krylov path:
// -u'' + kappa^2 u - omega^2 eps u - omega^2 chi |u|^2 u = 0, periodic.

class ScalarToy {
 public:
  ScalarToy(Eigen::ArrayXd eps, Eigen::ArrayXd chi, double length, double kappa)
      : eps_(std::move(eps)), chi_(std::move(chi)), length_(length), kappa_(kappa) {
    if (eps_.size() != chi_.size()) throw std::invalid_argument("ScalarToy: eps and chi sizes differ");
    const int n = size();
    xi_ = Eigen::ArrayXd(n);
    for (int i = 0; i < n; ++i) xi_(i) = 2 * kPi * signed_index(i, n) / length_;
  }

  int size() const { return static_cast<int>(eps_.size()); }
  double length() const { return length_; }
  const Eigen::ArrayXd& eps() const { return eps_; }

  Eigen::VectorXcd second_derivative_neg(const Eigen::VectorXcd& u) const {
    Eigen::ArrayXXcd a = Eigen::Map<const Eigen::ArrayXXcd>(u.data(), size(), 1);
    Eigen::ArrayXXcd h = fft_forward(a);
    h.col(0) *= xi_.square().cast<cdouble>();
    const Eigen::ArrayXXcd b = fft_backward(h);
    return Eigen::Map<const Eigen::VectorXcd>(b.data(), size());
  }

  Eigen::VectorXcd linear(const Eigen::VectorXcd& u, double omega) const {
    return second_derivative_neg(u) + (kappa_ * kappa_ - omega * omega * eps_).matrix().cast<cdouble>().asDiagonal() * u;
  }

  Eigen::VectorXcd residual(const Eigen::VectorXcd& u, double omega) const {
    Eigen::VectorXcd r = linear(u, omega);
    for (int i = 0; i < size(); ++i) r(i) -= omega * omega * chi_(i) * std::norm(u(i)) * u(i);
    return r;
  }

  Eigen::VectorXcd jacobian(const Eigen::VectorXcd& u, const Eigen::VectorXcd& d, double omega) const {
    Eigen::VectorXcd r = linear(d, omega);
    for (int i = 0; i < size(); ++i) r(i) -= omega * omega * chi_(i) * (2.0 * std::norm(u(i)) * d(i) + u(i) * u(i) * std::conj(d(i)));
    return r;
  }

  Eigen::MatrixXcd linear_matrix(double omega) const {
    const int n = size();
    Eigen::MatrixXcd m(n, n);
    for (int j = 0; j < n; ++j) {
      Eigen::VectorXcd e = Eigen::VectorXcd::Zero(n);
      e(j) = 1.0;
      m.col(j) = linear(e, omega);
    }
    return m;
  }

  double norm(const Eigen::VectorXcd& v) const { return v.norm() * std::sqrt(length_ / size()); }

  Eigen::VectorXcd pt_project(const Eigen::VectorXcd& v) const {
    const int n = size();
    Eigen::VectorXcd r(n);
    for (int i = 0; i < n; ++i) r(i) = 0.5 * (v(i) + std::conj(v((n - i) % n)));
    return r;
  }

  Eigen::VectorXcd solve(const Eigen::VectorXcd& u0, double omega, const NewtonKrylovOptions& opt = {},
                         NewtonKrylovReport* report = nullptr) const {
    const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(linear_matrix(omega));
    NewtonKrylovProblem pb;
    pb.residual = [&](const Eigen::VectorXcd& v) { return residual(v, omega); };
    pb.jacobian = [&](const Eigen::VectorXcd& v) -> LinearMap {
      return [this, v, omega](const Eigen::VectorXcd& d) { return jacobian(v, d, omega); };
    };
    pb.precond = [&](const Eigen::VectorXcd& v) -> Eigen::VectorXcd { return lu.solve(v); };
    pb.project = [&](const Eigen::VectorXcd& v) { return pt_project(v); };
    pb.norm = [&](const Eigen::VectorXcd& v) { return norm(v); };
    return newton_krylov(pb, u0, opt, report);
  }

 private:
  Eigen::ArrayXd eps_, chi_;
  double length_, kappa_;
  Eigen::ArrayXd xi_;
};

// ---------------------------------------------------------------------------
// Discrete Bloch transform on an S x S supercell with nc samples per cell:
// u~(x, k_s) = S^-2 sum_R u(x + R) e^{-i k_s.(x + R)}, k_s = (s1 b1 + s2 b2)/S.

class BlochTransform {
 public:
  BlochTransform(Lattice lat, int S, int nc) : lat_(std::move(lat)), S_(S), nc_(nc) {
    if (S < 1 || nc < 1) throw std::invalid_argument("BlochTransform: sizes must be positive");
  }
  static BlochTransform for_grid(const Lattice& lat, int S, int n1, int n2) {
    if (n1 != n2 || n1 % S != 0) throw std::invalid_argument("BlochTransform: grid is not commensurate with the supercell");
    return BlochTransform(lat, S, n1 / S);
  }

  int S() const { return S_; }
  int nc() const { return nc_; }
  int count() const { return S_ * S_; }
  Vec2 k(int s) const { return (static_cast<double>(s % S_) / S_) * lat_.b1() + (static_cast<double>(s / S_) / S_) * lat_.b2(); }
  Vec2 cell_point(int i, int j) const { return lat_.grid_point(i, j, nc_, nc_); }

  std::vector<Eigen::ArrayXXcd> forward(const Eigen::ArrayXXcd& u) const {
    check(u);
    std::vector<Eigen::ArrayXXcd> out(count(), Eigen::ArrayXXcd::Zero(nc_, nc_));
    for (int s = 0; s < count(); ++s) {
      const Vec2 ks = k(s);
      for (int r2 = 0; r2 < S_; ++r2)
        for (int r1 = 0; r1 < S_; ++r1)
          for (int j = 0; j < nc_; ++j)
            for (int i = 0; i < nc_; ++i) {
              const Vec2 x = lat_.grid_point(i + nc_ * r1, j + nc_ * r2, nc_, nc_);
              out[s](i, j) += u(i + nc_ * r1, j + nc_ * r2) * std::polar(1.0, -ks.dot(x));
            }
      out[s] /= static_cast<double>(S_) * S_;
    }
    return out;
  }

  Eigen::ArrayXXcd inverse(const std::vector<Eigen::ArrayXXcd>& t) const {
    if (static_cast<int>(t.size()) != count()) throw std::invalid_argument("BlochTransform: wrong number of k samples");
    const int N = S_ * nc_;
    Eigen::ArrayXXcd u = Eigen::ArrayXXcd::Zero(N, N);
    for (int s = 0; s < count(); ++s) {
      const Vec2 ks = k(s);
      for (int jj = 0; jj < N; ++jj)
        for (int ii = 0; ii < N; ++ii)
          u(ii, jj) += t[s](ii % nc_, jj % nc_) * std::polar(1.0, ks.dot(lat_.grid_point(ii, jj, nc_, nc_)));
    }
    return u;
  }

  // u~(x, q) for q = k_s + K with K = m b1 + n b2: e^{-iK.x} u~(x, k_s).
  Eigen::ArrayXXcd shifted(const std::vector<Eigen::ArrayXXcd>& t, int s1, int s2) const {
    const int m = floordiv(s1, S_), n = floordiv(s2, S_);
    const int r1 = s1 - m * S_, r2 = s2 - n * S_;
    Eigen::ArrayXXcd out = t[r1 + S_ * r2];
    if (m == 0 && n == 0) return out;
    const Vec2 K = lat_.reciprocal(m, n);
    for (int j = 0; j < nc_; ++j)
      for (int i = 0; i < nc_; ++i) out(i, j) *= std::polar(1.0, -K.dot(cell_point(i, j)));
    return out;
  }

  // (f~ * g~)(k_s) = sum_l f~(k_s - k_l) g~(k_l)
  std::vector<Eigen::ArrayXXcd> convolve(const std::vector<Eigen::ArrayXXcd>& f, const std::vector<Eigen::ArrayXXcd>& g) const {
    std::vector<Eigen::ArrayXXcd> out(count(), Eigen::ArrayXXcd::Zero(nc_, nc_));
    for (int s = 0; s < count(); ++s)
      for (int l = 0; l < count(); ++l) {
        const int d1 = s % S_ - l % S_, d2 = s / S_ - l / S_;
        out[s] += shifted(f, d1, d2) * g[l];
      }
    return out;
  }

  // Parseval weight: ||u||^2 = S^2 sum_s ||u~(., k_s)||^2 over the cell.
  double weight() const { return static_cast<double>(S_) * S_; }

 private:
  static int floordiv(int a, int b) { return (a >= 0) ? a / b : -((-a + b - 1) / b); }
  void check(const Eigen::ArrayXXcd& u) const {
    if (u.rows() != S_ * nc_ || u.cols() != S_ * nc_)
      throw std::invalid_argument("BlochTransform: field grid is not commensurate with the supercell");
  }
  Lattice lat_;
  int S_, nc_;
};

}  // namespace gapsol
