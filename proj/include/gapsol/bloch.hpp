#pragma once

#include "gapsol/common.hpp"
#include "gapsol/fft.hpp"
#include "gapsol/field.hpp"
#include "gapsol/lattice.hpp"
#include "gapsol/medium.hpp"

#include <Eigen/Eigenvalues>

#include <memory>
#include <random>

namespace gapsol {

// galerkin: plane waves with |K| <= (cutoff + 1/2) min|b_i| and a grid fine
// enough that no coefficient product wraps.
// collocation: every frequency of an odd grid; the operator is the
// pseudo-spectral one, exactly equivalent to the grid E-field problem.
enum class Discretization { galerkin, collocation };

struct PlaneWave {
  int m = 0, n = 0;
};

class TransverseBasis {
 public:
  TransverseBasis(const Lattice& lat, const Vec2& k, double kappa, int cutoff, Discretization disc, int n1, int n2)
      : lattice_(lat), k_(k), kappa_(kappa), cutoff_(cutoff), disc_(disc), n1_(n1), n2_(n2) {
    if (kappa == 0.0) throw std::invalid_argument("TransverseBasis: kappa must be nonzero");
    if (disc == Discretization::collocation) {
      if (n1 % 2 == 0 || n2 % 2 == 0) throw std::invalid_argument("TransverseBasis: collocation needs an odd grid");
      for (int j = 0; j < n2; ++j)
        for (int i = 0; i < n1; ++i) waves_.push_back({signed_index(i, n1), signed_index(j, n2)});
    } else {
      waves_ = disk_waves(lat, cutoff);
      int mm = 0, mn = 0;
      for (const auto& w : waves_) {
        mm = std::max(mm, std::abs(w.m));
        mn = std::max(mn, std::abs(w.n));
      }
      if (n1 < 4 * mm + 1 || n2 < 4 * mn + 1)
        throw std::invalid_argument("TransverseBasis: grid " + std::to_string(n1) + "x" + std::to_string(n2) +
                                    " cannot resolve coefficient differences up to (" + std::to_string(2 * mm) + "," +
                                    std::to_string(2 * mn) + ")");
    }
    kt_.resize(waves_.size());
    pol_.resize(waves_.size());
    for (size_t i = 0; i < waves_.size(); ++i) {
      const Vec2 q = k + lat.reciprocal(waves_[i].m, waves_[i].n);
      kt_[i] = Vec3(q.x(), q.y(), kappa);
      const Vec3 t = kt_[i].normalized();
      Vec3 e1 = Vec3::UnitZ().cross(t);
      e1 = e1.norm() > 1e-8 ? Vec3(e1.normalized()) : Vec3::UnitX();
      pol_[i][0] = e1;
      pol_[i][1] = t.cross(e1);
    }
  }

  // Reciprocal vectors with |K| <= (cutoff + 1/2) min|b_i|, sorted by length.
  static std::vector<PlaneWave> disk_waves(const Lattice& lat, int cutoff) {
    if (cutoff < 0) throw std::invalid_argument("TransverseBasis: negative cutoff");
    const double bmin = std::min(lat.b1().norm(), lat.b2().norm());
    const double radius = (cutoff + 0.5) * bmin;
    Mat2 b;
    b.col(0) = lat.b1();
    b.col(1) = lat.b2();
    const double smin = Eigen::JacobiSVD<Mat2>(b).singularValues().minCoeff();
    const int r = static_cast<int>(std::ceil(radius / smin)) + 1;
    std::vector<std::pair<double, PlaneWave>> all;
    for (int n = -r; n <= r; ++n)
      for (int m = -r; m <= r; ++m) {
        const double len = lat.reciprocal(m, n).norm();
        if (len <= radius * (1 + 1e-12)) all.push_back({len, {m, n}});
      }
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      if (std::abs(a.first - b.first) > 1e-12 * (1 + a.first)) return a.first < b.first;
      if (a.second.m != b.second.m) return a.second.m < b.second.m;
      return a.second.n < b.second.n;
    });
    std::vector<PlaneWave> out;
    for (const auto& p : all) out.push_back(p.second);
    return out;
  }

  const Lattice& lattice() const { return lattice_; }
  const Vec2& k() const { return k_; }
  double kappa() const { return kappa_; }
  int cutoff() const { return cutoff_; }
  Discretization discretization() const { return disc_; }
  int n1() const { return n1_; }
  int n2() const { return n2_; }
  int waves() const { return static_cast<int>(waves_.size()); }
  int dim() const { return 2 * waves(); }
  const PlaneWave& wave(int i) const { return waves_[i]; }
  const Vec3& ktilde(int i) const { return kt_[i]; }
  const Vec3& pol(int i, int a) const { return pol_[i][a]; }

 private:
  Lattice lattice_;
  Vec2 k_;
  double kappa_;
  int cutoff_;
  Discretization disc_;
  int n1_, n2_;
  std::vector<PlaneWave> waves_;
  std::vector<Vec3> kt_;
  std::vector<std::array<Vec3, 2>> pol_;
};

// M[(i,a),(j,b)] = (kt_i x e_a(i)) . (kt_j x e_b(j)) * eta_hat(K_i - K_j), with
// eta_hat the grid DFT of 1/eps on the basis grid.
inline Eigen::MatrixXcd assemble_h_operator(const TransverseBasis& basis, const Eigen::ArrayXXcd& eta_hat) {
  if (eta_hat.rows() != basis.n1() || eta_hat.cols() != basis.n2())
    throw std::invalid_argument("assemble_h_operator: 1/eps coefficients on the wrong grid");
  const int nw = basis.waves();
  std::vector<std::array<Vec3, 2>> curl(nw);
  for (int i = 0; i < nw; ++i)
    for (int a = 0; a < 2; ++a) curl[i][a] = basis.ktilde(i).cross(basis.pol(i, a));
  Eigen::MatrixXcd m(2 * nw, 2 * nw);
  const int n1 = basis.n1(), n2 = basis.n2();
  for (int j = 0; j < nw; ++j) {
    for (int i = 0; i < nw; ++i) {
      const cdouble eta = eta_hat(slot_index(basis.wave(i).m - basis.wave(j).m, n1), slot_index(basis.wave(i).n - basis.wave(j).n, n2));
      for (int b = 0; b < 2; ++b)
        for (int a = 0; a < 2; ++a) m(2 * i + a, 2 * j + b) = curl[i][a].dot(curl[j][b]) * eta;
    }
  }
  return m;
}

struct EigenResult {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXcd vectors; // orthonormal columns
  int iterations = 0;
};

struct EigenOptions {
  int dense_limit = 2000;
  double shift = 0.0;  // target for the shift-invert path
  int max_iter = 500;
  double tol = 1e-11;
};

inline EigenResult solve_eigenpairs(const Eigen::MatrixXcd& m, int count, const EigenOptions& opt = {}) {
  const Eigen::Index n = m.rows();
  if (m.cols() != n) throw std::invalid_argument("solve_eigenpairs: matrix not square");
  if (count < 1 || count > n) throw std::invalid_argument("solve_eigenpairs: count out of range");
  const double mnorm = m.norm();
  if ((m - m.adjoint()).norm() > 1e-12 * std::max(1.0, mnorm))
    throw std::invalid_argument("solve_eigenpairs: matrix is not Hermitian");
  EigenResult r;
  if (n <= opt.dense_limit) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m);
    if (es.info() != Eigen::Success) throw ConvergenceError("solve_eigenpairs: dense Hermitian solver failed", {});
    r.values = es.eigenvalues().head(count);
    r.vectors = es.eigenvectors().leftCols(count);
    return r;
  }
  // Shift-invert block subspace iteration with Rayleigh-Ritz.
  const int block = std::min<int>(static_cast<int>(n), count + std::max(8, count / 2));
  Eigen::MatrixXcd shifted = m;
  shifted.diagonal().array() -= opt.shift;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(shifted);
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXcd x(n, block);
  for (Eigen::Index j = 0; j < block; ++j)
    for (Eigen::Index i = 0; i < n; ++i) x(i, j) = cdouble(nd(rng), nd(rng));
  std::vector<double> history;
  for (int it = 1; it <= opt.max_iter; ++it) {
    x = lu.solve(x);
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(x);
    x = qr.householderQ() * Eigen::MatrixXcd::Identity(n, block);
    const Eigen::MatrixXcd t = x.adjoint() * m * x;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (t + t.adjoint()));
    // order Ritz pairs by distance to the shift, keep the nearest `count`
    std::vector<int> order(block);
    for (int i = 0; i < block; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return std::abs(es.eigenvalues()(a) - opt.shift) < std::abs(es.eigenvalues()(b) - opt.shift);
    });
    Eigen::MatrixXcd ritz = x * es.eigenvectors();
    double worst = 0.0;
    for (int i = 0; i < count; ++i) {
      const int c = order[i];
      worst = std::max(worst, (m * ritz.col(c) - es.eigenvalues()(c) * ritz.col(c)).norm() / std::max(1.0, mnorm));
    }
    history.push_back(worst);
    x = ritz;
    if (worst < opt.tol) {
      std::vector<int> keep(order.begin(), order.begin() + count);
      std::sort(keep.begin(), keep.end(), [&](int a, int b) { return es.eigenvalues()(a) < es.eigenvalues()(b); });
      r.values.resize(count);
      r.vectors.resize(n, count);
      for (int i = 0; i < count; ++i) {
        r.values(i) = es.eigenvalues()(keep[i]);
        r.vectors.col(i) = ritz.col(keep[i]);
      }
      r.iterations = it;
      return r;
    }
  }
  throw ConvergenceError("solve_eigenpairs: shift-invert iteration did not converge in " + std::to_string(opt.max_iter) +
                             " iterations (last residual " + std::to_string(history.back()) + ")",
                         history);
}

struct BlochEigenpair {
  Vec2 k = Vec2::Zero();
  int band = 0;  // 1-based
  double omega2 = 0.0;
  double omega = 0.0;
  double margin = 0.0;  // distance in omega^2 to the neighbouring eigenvalues
  bool degenerate = false;
  Eigen::VectorXcd coeffs;  // q in the transverse basis, unit Euclidean norm
  std::shared_ptr<const TransverseBasis> basis;
  VectorField p;  // E-field profile on the cell grid
  bool normalized = false;
  bool phase_fixed = false;
  bool phase_reliable = false;
  double pt_defect = 0.0;
  double phase = 0.0;
  std::string sign_rule;

  // Fourier coefficients of p (grid DFT, normalized).
  VectorField p_hat() const {
    VectorField h;
    for (int a = 0; a < 3; ++a) h[a] = fft_forward(p[a]);
    return h;
  }
};

inline double default_gap_tol(double omega2) { return 1e-6 * std::max(1.0, omega2); }

// Cell-grid discretization of the periodic medium at fixed kappa.
class BlochSolver {
 public:
  BlochSolver(const Medium& medium, double kappa, int cutoff, Discretization disc = Discretization::galerkin, int n1 = 0,
              int n2 = 0)
      : lattice_(medium.lattice()), kappa_(kappa), cutoff_(cutoff), disc_(disc) {
    if (kappa == 0.0) throw std::invalid_argument("BlochSolver: kappa must be nonzero (Helmholtz decomposition needs it)");
    if (n1 <= 0 || n2 <= 0) {
      if (disc == Discretization::collocation) {
        n1 = n2 = 2 * cutoff + 1;
      } else {
        int mm = 0, mn = 0;
        for (const auto& w : TransverseBasis::disk_waves(lattice_, cutoff)) {
          mm = std::max(mm, std::abs(w.m));
          mn = std::max(mn, std::abs(w.n));
        }
        n1 = std::max(4 * mm + 1, 64);
        n2 = std::max(4 * mn + 1, 64);
      }
    }
    n1_ = n1;
    n2_ = n2;
    eps_ = medium.eps_field(n1, n2).samples;
    if (!(eps_.minCoeff() > 0.0)) throw std::invalid_argument("BlochSolver: eps must be positive");
    eta_ = eps_.inverse();
    eta_hat_ = fft_forward(eta_);
  }

  BlochSolver(const Lattice& lat, const Eigen::ArrayXXd& eps_samples, double kappa, int cutoff, Discretization disc)
      : lattice_(lat), kappa_(kappa), cutoff_(cutoff), disc_(disc) {
    if (kappa == 0.0) throw std::invalid_argument("BlochSolver: kappa must be nonzero (Helmholtz decomposition needs it)");
    n1_ = static_cast<int>(eps_samples.rows());
    n2_ = static_cast<int>(eps_samples.cols());
    eps_ = eps_samples;
    if (!(eps_.minCoeff() > 0.0)) throw std::invalid_argument("BlochSolver: eps must be positive");
    eta_ = eps_.inverse();
    eta_hat_ = fft_forward(eta_);
  }

  const Lattice& lattice() const { return lattice_; }
  double kappa() const { return kappa_; }
  int cutoff() const { return cutoff_; }
  Discretization discretization() const { return disc_; }
  int n1() const { return n1_; }
  int n2() const { return n2_; }
  const Eigen::ArrayXXd& eps() const { return eps_; }
  const Eigen::ArrayXXd& eta() const { return eta_; }
  const Eigen::ArrayXXcd& eta_hat() const { return eta_hat_; }

  std::shared_ptr<const TransverseBasis> basis(const Vec2& k) const {
    return std::make_shared<const TransverseBasis>(lattice_, k, kappa_, cutoff_, disc_, n1_, n2_);
  }

  Eigen::MatrixXcd matrix(const TransverseBasis& b) const { return assemble_h_operator(b, eta_hat_); }

  // Lowest `count` values of omega^2. The truncated basis is centred on
  // K = 0, so k is first reduced to the Brillouin zone where it is most
  // accurate; this keeps the values periodic in k.
  Eigen::VectorXd eigenvalues(const Vec2& k, int count) const {
    const auto b = basis(lattice_.reduce_to_bz(k));
    Eigen::MatrixXcd m = matrix(*b);
    if (m.rows() <= eig_opts.dense_limit) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
      if (es.info() != Eigen::Success) throw ConvergenceError("BlochSolver: eigensolver failed", {});
      return es.eigenvalues().head(std::min<Eigen::Index>(count, m.rows()));
    }
    return solve_eigenpairs(m, count, eig_opts).values;
  }

  // Eigenpairs for bands 1..count with p recovered and eps-normalized, at k
  // as given (callers pass zone-reduced points).
  std::vector<BlochEigenpair> eigenpairs(const Vec2& k, int count, double omega_floor = 1e-8) const;

  // curl q on the grid: i kt x q_hat synthesized, q = sum c e^{iK.x}/sqrt|Q|.
  VectorField curl_q(const TransverseBasis& b, const Eigen::VectorXcd& c) const {
    std::array<Eigen::ArrayXXcd, 3> hat;
    for (auto& h : hat) h = Eigen::ArrayXXcd::Zero(n1_, n2_);
    const double s = 1.0 / std::sqrt(lattice_.cell_area());
    for (int i = 0; i < b.waves(); ++i) {
      const Vec3c q = c(2 * i) * b.pol(i, 0).cast<cdouble>() + c(2 * i + 1) * b.pol(i, 1).cast<cdouble>();
      const Vec3c cq = kI * s * b.ktilde(i).cast<cdouble>().cross(q);
      const int si = slot_index(b.wave(i).m, n1_), sj = slot_index(b.wave(i).n, n2_);
      for (int a = 0; a < 3; ++a) hat[a](si, sj) += cq(a);
    }
    VectorField out;
    for (int a = 0; a < 3; ++a) out[a] = fft_backward(hat[a]);
    return out;
  }

  // q on the grid.
  VectorField q_field(const TransverseBasis& b, const Eigen::VectorXcd& c) const {
    std::array<Eigen::ArrayXXcd, 3> hat;
    for (auto& h : hat) h = Eigen::ArrayXXcd::Zero(n1_, n2_);
    const double s = 1.0 / std::sqrt(lattice_.cell_area());
    for (int i = 0; i < b.waves(); ++i) {
      const int si = slot_index(b.wave(i).m, n1_), sj = slot_index(b.wave(i).n, n2_);
      for (int a = 0; a < 3; ++a) hat[a](si, sj) += s * (c(2 * i) * b.pol(i, 0)(a) + c(2 * i + 1) * b.pol(i, 1)(a));
    }
    VectorField out;
    for (int a = 0; a < 3; ++a) out[a] = fft_backward(hat[a]);
    return out;
  }

  double quadrature_weight() const { return lattice_.cell_area() / (static_cast<double>(n1_) * n2_); }

  EigenOptions eig_opts;

 private:
  Lattice lattice_;
  double kappa_;
  int cutoff_;
  Discretization disc_;
  int n1_ = 0, n2_ = 0;
  Eigen::ArrayXXd eps_, eta_;
  Eigen::ArrayXXcd eta_hat_;
};

// p = (i/omega) (1/eps) curl q, rescaled so that int eps |p|^2 = 1 by grid quadrature.
inline void recover_e_field(BlochEigenpair& pair, const BlochSolver& solver, double omega_floor = 1e-8) {
  if (!(pair.omega > omega_floor))
    throw std::invalid_argument("recover_e_field: omega " + std::to_string(pair.omega) + " below floor");
  VectorField cq = solver.curl_q(*pair.basis, pair.coeffs);
  for (int a = 0; a < 3; ++a) pair.p[a] = (kI / pair.omega) * solver.eta() * cq[a];
  double norm2 = 0.0;
  for (int a = 0; a < 3; ++a) norm2 += (solver.eps() * pair.p[a].abs2()).sum();
  norm2 *= solver.quadrature_weight();
  pair.p *= 1.0 / std::sqrt(norm2);
  pair.normalized = true;
}

// Relative residual of curl' curl' p - omega^2 eps p tested against the
// plane-wave set of the basis (all grid frequencies in collocation mode).
inline double e_field_residual(const BlochEigenpair& pair, const BlochSolver& solver) {
  const auto& b = *pair.basis;
  VectorField ph = pair.p_hat();
  VectorField ep;
  for (int a = 0; a < 3; ++a) ep[a] = fft_forward(Eigen::ArrayXXcd(solver.eps() * pair.p[a]));
  double num = 0.0, den = 0.0;
  for (int i = 0; i < b.waves(); ++i) {
    const int si = slot_index(b.wave(i).m, solver.n1()), sj = slot_index(b.wave(i).n, solver.n2());
    const Vec3c kt = b.ktilde(i).cast<cdouble>();
    const Vec3c pv(ph[0](si, sj), ph[1](si, sj), ph[2](si, sj));
    const Vec3c ev(ep[0](si, sj), ep[1](si, sj), ep[2](si, sj));
    const Vec3c cc = kt.squaredNorm() * pv - kt * kt.dot(pv);
    num += (cc - pair.omega2 * ev).squaredNorm();
    den += (pair.omega2 * ev).squaredNorm();
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

inline std::vector<BlochEigenpair> BlochSolver::eigenpairs(const Vec2& k, int count, double omega_floor) const {
  const auto b = basis(k);
  const Eigen::MatrixXcd m = matrix(*b);
  const int want = std::min<int>(count + 1, static_cast<int>(m.rows()));
  const EigenResult er = solve_eigenpairs(m, want, eig_opts);
  std::vector<BlochEigenpair> out;
  for (int n = 0; n < count; ++n) {
    BlochEigenpair p;
    p.k = k;
    p.band = n + 1;
    p.omega2 = std::max(0.0, er.values(n));
    p.omega = std::sqrt(p.omega2);
    double margin = INFINITY;
    if (n > 0) margin = std::min(margin, er.values(n) - er.values(n - 1));
    if (n + 1 < want) margin = std::min(margin, er.values(n + 1) - er.values(n));
    p.margin = margin;
    p.degenerate = !(margin > default_gap_tol(p.omega2));
    p.coeffs = er.vectors.col(n);
    p.basis = b;
    recover_e_field(p, *this, omega_floor);
    out.push_back(std::move(p));
  }
  return out;
}

// Multiply p by e^{i alpha} so that its Fourier coefficients become real
// (equivalently p(-x) = conj p(x)); alpha = -arg(sum c^2)/2 up to sign, the
// sign taken so that the first component with nonzero cell mean is positive.
inline BlochEigenpair fix_phase(BlochEigenpair pair, double gap_tol = -1.0) {
  if (gap_tol < 0) gap_tol = default_gap_tol(pair.omega2);
  const VectorField h = pair.p_hat();
  cdouble z = 0.0;
  double mx = 0.0;
  for (int a = 0; a < 3; ++a) {
    z += (h[a] * h[a]).sum();
    mx = std::max(mx, h[a].abs().maxCoeff());
  }
  double alpha = std::abs(z) > 0 ? -0.5 * std::arg(z) : 0.0;
  cdouble rot = std::polar(1.0, alpha);
  // sign convention
  cdouble ref = 0.0;
  pair.sign_rule = "none";
  for (int a = 0; a < 3 && ref == 0.0; ++a)
    if (std::abs(h[a](0, 0)) > 1e-8 * mx) {
      ref = rot * h[a](0, 0);
      pair.sign_rule = "cell_mean";
    }
  if (ref == 0.0) {
    for (int a = 0; a < 3 && ref == 0.0; ++a)
      for (Eigen::Index i = 0; i < h[a].size(); ++i)
        if (std::abs(h[a](i)) > 1e-6 * mx) {
          ref = rot * h[a](i);
          pair.sign_rule = "first_coefficient";
          break;
        }
  }
  if (ref.real() < 0) {
    alpha += kPi;
    rot = -rot;
  }
  alpha = std::remainder(alpha, 2 * kPi);
  pair.p *= rot;
  pair.coeffs *= rot;
  pair.phase = alpha;
  pair.pt_defect = pt_defect(pair.p);
  pair.phase_fixed = true;
  pair.phase_reliable = pair.margin > gap_tol;
  return pair;
}

// Partner at -k under the convention p(x,-k) = conj p(x,k).
inline BlochEigenpair negative_k(const BlochEigenpair& pair) {
  BlochEigenpair m = pair;
  m.k = -pair.k;
  m.p = conj(pair.p);
  m.coeffs.resize(0);
  m.basis.reset();
  return m;
}

enum class Projection { P, Q, Peps, Qeps, epsP, epsQ };

// Projections built from an eps-normalized mode p on the cell grid.
class ProjectionSet {
 public:
  ProjectionSet(VectorField p, Eigen::ArrayXXd eps, double cell_area)
      : p_(std::move(p)), eps_(std::move(eps)), w_(cell_area / static_cast<double>(eps_.size())) {
    for (int a = 0; a < 3; ++a) ep_[a] = eps_ * p_[a];
    pp_ = inner(p_, p_).real();
  }

  cdouble inner(const VectorField& f, const VectorField& g) const { return w_ * grid_dot(f, g); }
  cdouble weighted_inner(const VectorField& f, const VectorField& g, const Eigen::ArrayXXd& weight) const {
    cdouble s = 0.0;
    for (int a = 0; a < 3; ++a) s += (weight * f[a] * g[a].conjugate()).sum();
    return w_ * s;
  }

  VectorField apply(Projection which, const VectorField& f) const {
    switch (which) {
      case Projection::P: return (inner(f, p_) / pp_) * p_;
      case Projection::Q: return f - apply(Projection::P, f);
      case Projection::Peps: return inner(f, ep_) * p_;
      case Projection::Qeps: return f - apply(Projection::Peps, f);
      case Projection::epsP: return inner(f, p_) * ep_;
      case Projection::epsQ: return f - apply(Projection::epsP, f);
    }
    throw std::logic_error("ProjectionSet: unknown projection");
  }

  const VectorField& mode() const { return p_; }
  const Eigen::ArrayXXd& eps() const { return eps_; }

 private:
  VectorField p_, ep_;
  Eigen::ArrayXXd eps_;
  double w_;
  double pp_;
};

struct HelmholtzParts {
  VectorField w;     // divergence-free part
  VectorField grad;  // grad'_k psi
  Eigen::ArrayXXcd psi;
};

// f = w + grad'_k psi with grad'_k = (d1 + i k1, d2 + i k2, i kappa), solved per
// Fourier mode from the coercive form (grad' psi, grad' g) = (f, grad' g).
inline HelmholtzParts helmholtz_decompose(const VectorField& f, const Lattice& lat, const Vec2& k, double kappa) {
  if (kappa == 0.0) throw std::invalid_argument("helmholtz_decompose: kappa = 0 makes the form non-coercive at k + K = 0");
  const int n1 = f.n1(), n2 = f.n2();
  VectorField fh;
  for (int a = 0; a < 3; ++a) fh[a] = fft_forward(f[a]);
  Eigen::ArrayXXcd psi_hat(n1, n2);
  VectorField gh(n1, n2);
  for (int j = 0; j < n2; ++j)
    for (int i = 0; i < n1; ++i) {
      const Vec2 q = k + lat.reciprocal(signed_index(i, n1), signed_index(j, n2));
      const Vec3 kt(q.x(), q.y(), kappa);
      const cdouble div = kt(0) * fh[0](i, j) + kt(1) * fh[1](i, j) + kt(2) * fh[2](i, j);
      psi_hat(i, j) = div / (kI * kt.squaredNorm());
      for (int a = 0; a < 3; ++a) gh[a](i, j) = kI * kt(a) * psi_hat(i, j);
    }
  HelmholtzParts out;
  out.psi = fft_backward(psi_hat);
  for (int a = 0; a < 3; ++a) out.grad[a] = fft_backward(gh[a]);
  out.w = f - out.grad;
  return out;
}

// Discrete H^2(Q) norm of a periodic field, sum_K (1 + |K|^2)^2 |c_K|^2 |Q|.
inline double h2_norm_periodic(const VectorField& f, const Lattice& lat) {
  double s = 0.0;
  for (int a = 0; a < 3; ++a) {
    const Eigen::ArrayXXcd h = fft_forward(f[a]);
    for (int j = 0; j < f.n2(); ++j)
      for (int i = 0; i < f.n1(); ++i) {
        const double k2 = lat.reciprocal(signed_index(i, f.n1()), signed_index(j, f.n2())).squaredNorm();
        s += (1 + k2) * (1 + k2) * std::norm(h(i, j));
      }
  }
  return std::sqrt(s * lat.cell_area());
}

}  // namespace gapsol
