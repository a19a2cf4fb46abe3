#pragma once

#include "gapsol/bands.hpp"
#include "gapsol/bloch.hpp"
#include "gapsol/fft.hpp"
#include "gapsol/krylov.hpp"
#include "gapsol/lattice.hpp"
#include "gapsol/medium.hpp"

#include <array>
#include <random>

namespace gapsol {

using Triple = std::array<int, 3>;  // (alpha, beta, gamma), 0-based

struct CmeSystem {
  int N = 0;
  int Omega = -1;
  double omega_star = 0.0;
  std::vector<Mat2> H;
  std::vector<Vec2> kpoints;
  std::vector<std::vector<Triple>> sigma;
  std::vector<std::vector<cdouble>> I;

  double max_imag_coefficient() const {
    double m = 0.0;
    for (const auto& row : I)
      for (const auto& c : row) m = std::max(m, std::abs(c.imag()));
    return m;
  }
  // |sum_j sum_sigma I| over the first component, used for amplitude guesses.
  double coefficient_scale() const {
    double s = 0.0;
    for (const auto& c : I[0]) s += c.real();
    return std::abs(s);
  }
};

// sigma_j = {(a,b,c): k_a + k_b - k_c - k_j in Lambda*}.
inline std::vector<std::vector<Triple>> resonance_sets(const std::vector<Vec2>& k, const Lattice& lat, double tol = 1e-6) {
  const int n = static_cast<int>(k.size());
  std::vector<std::vector<Triple>> s(n);
  for (int j = 0; j < n; ++j)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c)
          if (lat.is_reciprocal_vector(k[a] + k[b] - k[c] - k[j], tol)) s[j].push_back({a, b, c});
  return s;
}

// I^j_abc = (omega*/2) sum_{abcd} int_Q chi_sym u_a(k_alpha) u_b(k_beta)
// conj(u_c(k_gamma)) conj(u_d(k_j)), u = p e^{ik.x}, by grid quadrature.
inline std::vector<std::vector<cdouble>> coupling_coefficients(const std::vector<BlochEigenpair>& pairs,
                                                               const std::vector<std::vector<Triple>>& sigma,
                                                               const SusceptibilityField& chi, double omega_star,
                                                               const Lattice& lat) {
  const int n = static_cast<int>(pairs.size());
  for (const auto& p : pairs)
    if (!p.phase_fixed) throw std::invalid_argument("coupling_coefficients: Bloch pairs must be phase-fixed");
  const int n1 = pairs[0].p.n1(), n2 = pairs[0].p.n2();
  if (chi.n1() != n1 || chi.n2() != n2) throw std::invalid_argument("coupling_coefficients: chi grid differs from mode grid");
  const double w = lat.cell_area() / (static_cast<double>(n1) * n2);
  std::vector<std::vector<cdouble>> out(n);
  for (int j = 0; j < n; ++j) {
    for (const auto& t : sigma[j]) {
      const int al = t[0], be = t[1], ga = t[2];
      const Vec2 q = pairs[al].k + pairs[be].k - pairs[ga].k - pairs[j].k;
      const Eigen::Vector2i G = lat.nearest_reciprocal(q);
      const Vec2 Gv = lat.reciprocal(G.x(), G.y());
      Eigen::ArrayXXcd phase(n1, n2);
      for (int jj = 0; jj < n2; ++jj)
        for (int ii = 0; ii < n1; ++ii) phase(ii, jj) = std::polar(1.0, Gv.dot(lat.grid_point(ii, jj, n1, n2)));
      const auto& pa = pairs[al].p;
      const auto& pb = pairs[be].p;
      const auto& pc = pairs[ga].p;
      const auto& pd = pairs[j].p;
      Eigen::ArrayXXcd integrand = Eigen::ArrayXXcd::Zero(n1, n2);
      if (chi.isotropic_profile()) {
        auto dot = [](const VectorField& x, const VectorField& y) { return Eigen::ArrayXXcd(x[0] * y[0] + x[1] * y[1] + x[2] * y[2]); };
        const VectorField cc = conj(pc), cd = conj(pd);
        integrand = *chi.isotropic_profile() * (dot(pa, pb) * dot(cc, cd) + dot(pa, cc) * dot(pb, cd) + dot(pa, cd) * dot(pb, cc));
      } else {
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 3; ++c)
              for (int d = 0; d < 3; ++d)
                integrand += chi.symmetrized(a, b, c, d) * pa[a] * pb[b] * pc[c].conjugate() * pd[d].conjugate();
      }
      out[j].push_back(0.5 * omega_star * w * (integrand * phase).sum());
    }
  }
  return out;
}

// Envelope fields on the periodic square [-L, L)^2, sample y_i = -L + i 2L/M.
struct EnvelopeState {
  int N = 0, M = 0;
  double L = 0.0;
  std::vector<Eigen::ArrayXXcd> A;
  bool pt = false;
  bool trivial = false;

  EnvelopeState() = default;
  EnvelopeState(int n, int m, double l) : N(n), M(m), L(l), A(n, Eigen::ArrayXXcd::Zero(m, m)) {
    if (m < 4) throw std::invalid_argument("EnvelopeState: M too small");
    if (!(l > 0)) throw std::invalid_argument("EnvelopeState: L must be positive");
  }

  double h() const { return 2.0 * L / M; }
  double y(int i) const { return -L + i * h(); }
  double xi(int i) const { return kPi * signed_index(i, M) / L; }

  Eigen::VectorXcd flat() const {
    Eigen::VectorXcd v(static_cast<Eigen::Index>(N) * M * M);
    for (int j = 0; j < N; ++j) v.segment(static_cast<Eigen::Index>(j) * M * M, M * M) = Eigen::Map<const Eigen::VectorXcd>(A[j].data(), M * M);
    return v;
  }
  void set_flat(const Eigen::VectorXcd& v) {
    for (int j = 0; j < N; ++j) Eigen::Map<Eigen::VectorXcd>(A[j].data(), M * M) = v.segment(static_cast<Eigen::Index>(j) * M * M, M * M);
  }
  EnvelopeState with_flat(const Eigen::VectorXcd& v) const {
    EnvelopeState s = *this;
    s.set_flat(v);
    return s;
  }

  // continuous L2 norm over the box
  double norm() const {
    double s = 0.0;
    for (const auto& a : A) s += a.abs2().sum();
    return std::sqrt(s) * h();
  }
  double max_abs() const {
    double m = 0.0;
    for (const auto& a : A) m = std::max(m, a.abs().maxCoeff());
    return m;
  }
  double boundary_ratio() const {
    const double m = max_abs();
    if (m == 0.0) return 0.0;
    double b = 0.0;
    for (const auto& a : A) {
      b = std::max({b, a.row(0).abs().maxCoeff(), a.row(M - 1).abs().maxCoeff(), a.col(0).abs().maxCoeff(),
                    a.col(M - 1).abs().maxCoeff()});
    }
    return b / m;
  }
  double pt_defect() const {
    double num = 0.0, den = 0.0;
    for (const auto& a : A) {
      num = std::max(num, (a - reflect(a).conjugate()).abs().maxCoeff());
      den = std::max(den, a.abs().maxCoeff());
    }
    return den > 0 ? num / den : 0.0;
  }
};

inline Eigen::VectorXcd pt_project_flat(const EnvelopeState& shape, const Eigen::VectorXcd& v) {
  EnvelopeState s = shape.with_flat(v);
  for (auto& a : s.A) a = 0.5 * (a + reflect(a).conjugate());
  return s.flat();
}

// Spectral symbols of the linear CME part, Omega - (1/2) xi^T H_j xi.
inline std::vector<Eigen::ArrayXXd> linear_symbols(const CmeSystem& sys, int M, double L) {
  std::vector<Eigen::ArrayXXd> out;
  const double c = kPi / L;
  for (int j = 0; j < sys.N; ++j) {
    Eigen::ArrayXXd s(M, M);
    for (int i2 = 0; i2 < M; ++i2)
      for (int i1 = 0; i1 < M; ++i1) {
        const int m1 = signed_index(i1, M), m2 = signed_index(i2, M);
        const double x1 = c * m1, x2 = c * m2;
        // the mixed term has no consistent sign on a Nyquist line
        const double mixed = (M % 2 == 0 && (2 * std::abs(m1) == M || 2 * std::abs(m2) == M)) ? 0.0 : x1 * x2;
        s(i1, i2) = sys.Omega - 0.5 * (sys.H[j](0, 0) * x1 * x1 + sys.H[j](1, 1) * x2 * x2 + 2.0 * sys.H[j](0, 1) * mixed);
      }
    out.push_back(s);
  }
  return out;
}

inline Eigen::ArrayXXcd apply_symbol(const Eigen::ArrayXXd& sym, const Eigen::ArrayXXcd& f) {
  return fft_backward(Eigen::ArrayXXcd(sym * fft_forward(f)));
}

inline std::vector<Eigen::ArrayXXcd> nonlinear_term(const CmeSystem& sys, const EnvelopeState& A) {
  std::vector<Eigen::ArrayXXcd> out(sys.N, Eigen::ArrayXXcd::Zero(A.M, A.M));
  for (int j = 0; j < sys.N; ++j)
    for (size_t s = 0; s < sys.sigma[j].size(); ++s) {
      const auto& t = sys.sigma[j][s];
      out[j] += sys.I[j][s] * A.A[t[0]] * A.A[t[1]] * A.A[t[2]].conjugate();
    }
  return out;
}

// G_j = Omega A_j + (1/2)(H11 d11 + H22 d22 + 2 H12 d12) A_j + N_j(A).
inline std::vector<Eigen::ArrayXXcd> cme_residual(const CmeSystem& sys, const EnvelopeState& A) {
  if (A.N != sys.N) throw std::invalid_argument("cme_residual: component count mismatch");
  const auto sym = linear_symbols(sys, A.M, A.L);
  auto G = nonlinear_term(sys, A);
  for (int j = 0; j < sys.N; ++j) G[j] += apply_symbol(sym[j], A.A[j]);
  return G;
}

// Real-linear Jacobian J d = L d + sum_m (c_jm d_m + e_jm conj d_m).
class CmeJacobian {
 public:
  CmeJacobian(const CmeSystem& sys, const EnvelopeState& A) : sys_(sys), shape_(A) {
    sym_ = linear_symbols(sys, A.M, A.L);
    const int N = sys.N;
    c_.assign(N, std::vector<Eigen::ArrayXXcd>(N, Eigen::ArrayXXcd::Zero(A.M, A.M)));
    e_ = c_;
    for (int j = 0; j < N; ++j)
      for (size_t s = 0; s < sys.sigma[j].size(); ++s) {
        const auto& t = sys.sigma[j][s];
        const cdouble I = sys.I[j][s];
        c_[j][t[0]] += I * A.A[t[1]] * A.A[t[2]].conjugate();
        c_[j][t[1]] += I * A.A[t[0]] * A.A[t[2]].conjugate();
        e_[j][t[2]] += I * A.A[t[0]] * A.A[t[1]];
      }
  }

  Eigen::VectorXcd apply(const Eigen::VectorXcd& v) const {
    const EnvelopeState d = shape_.with_flat(v);
    EnvelopeState out = shape_;
    for (int j = 0; j < sys_.N; ++j) {
      out.A[j] = apply_symbol(sym_[j], d.A[j]);
      for (int m = 0; m < sys_.N; ++m) out.A[j] += c_[j][m] * d.A[m] + e_[j][m] * d.A[m].conjugate();
    }
    return out.flat();
  }

  // Adjoint for the real inner product Re sum conj(a) b.
  Eigen::VectorXcd apply_transpose(const Eigen::VectorXcd& v) const {
    const EnvelopeState a = shape_.with_flat(v);
    EnvelopeState out = shape_;
    for (int m = 0; m < sys_.N; ++m) {
      out.A[m] = apply_symbol(sym_[m], a.A[m]);
      for (int j = 0; j < sys_.N; ++j) out.A[m] += c_[j][m].conjugate() * a.A[j] + e_[j][m] * a.A[j].conjugate();
    }
    return out.flat();
  }

  // Inverse of the linear part (exact in Fourier space).
  Eigen::VectorXcd apply_linear_inverse(const Eigen::VectorXcd& v, int power = 1) const {
    EnvelopeState d = shape_.with_flat(v);
    for (int j = 0; j < sys_.N; ++j) {
      Eigen::ArrayXXd inv = sym_[j].unaryExpr([](double s) { return 1.0 / (std::abs(s) < 1e-12 ? (s < 0 ? -1e-12 : 1e-12) : s); });
      if (power == 2) inv = inv * inv;
      d.A[j] = apply_symbol(inv, d.A[j]);
    }
    return d.flat();
  }

  // Pointwise 2x2 real block [[dRe/dR, dRe/dI], [dIm/dR, dIm/dI]] of the
  // nonlinear part, for component j with respect to A_m.
  std::array<Eigen::ArrayXXd, 4> nonlinear_block(int j, int m) const {
    const Eigen::ArrayXXcd dR = c_[j][m] + e_[j][m];
    const Eigen::ArrayXXcd dI = kI * (c_[j][m] - e_[j][m]);
    return {dR.real(), dI.real(), dR.imag(), dI.imag()};
  }

  const std::vector<Eigen::ArrayXXd>& symbols() const { return sym_; }

 private:
  const CmeSystem& sys_;
  EnvelopeState shape_;
  std::vector<Eigen::ArrayXXd> sym_;
  std::vector<std::vector<Eigen::ArrayXXcd>> c_, e_;
};

inline Eigen::VectorXcd flatten(const std::vector<Eigen::ArrayXXcd>& fields) {
  const Eigen::Index m = fields[0].size();
  Eigen::VectorXcd v(m * static_cast<Eigen::Index>(fields.size()));
  for (size_t j = 0; j < fields.size(); ++j) v.segment(m * j, m) = Eigen::Map<const Eigen::VectorXcd>(fields[j].data(), m);
  return v;
}

// Gaussians aligned with the Hessian eigenvectors, exp(-(|Omega|/2) y^T |H|^{-1} y),
// amplitude sqrt(|Omega| / |sum I|) times `amplitude_factor`.
inline EnvelopeState gaussian_guess(const CmeSystem& sys, int M, double L, double amplitude_factor = 1.0,
                                    const std::vector<double>& weights = {}) {
  EnvelopeState s(sys.N, M, L);
  const double scale = sys.coefficient_scale();
  const double amp = amplitude_factor * std::sqrt(std::abs(sys.Omega) / (scale > 0 ? scale : 1.0));
  for (int j = 0; j < sys.N; ++j) {
    const double wj = weights.empty() ? 1.0 : weights[j];
    Eigen::SelfAdjointEigenSolver<Mat2> es(sys.H[j]);
    const Mat2 absH = es.eigenvectors() * es.eigenvalues().cwiseAbs().asDiagonal() * es.eigenvectors().transpose();
    const Mat2 q = std::abs(sys.Omega) * absH.inverse();
    for (int i2 = 0; i2 < M; ++i2)
      for (int i1 = 0; i1 < M; ++i1) {
        const Vec2 y(s.y(i1), s.y(i2));
        s.A[j](i1, i2) = wj * amp * std::exp(-0.5 * y.dot(q * y));
      }
  }
  s.pt = true;
  return s;
}

struct NewtonOptions {
  int max_iter = 50;
  double tol = 1e-10;          // on ||G|| / max(1, ||A||^3)
  double pt_drift_tol = 1e-8;
  double decay_tol = 1e-6;
  GmresOptions gmres{60, 600, 1e-12};
  bool enforce_pt = true;
};

struct NewtonReport {
  std::vector<double> residuals;
  int iterations = 0;
  double final_residual = 0.0;
  double boundary_ratio = 0.0;
  bool decay_ok = false;
};

inline double envelope_norm(const std::vector<Eigen::ArrayXXcd>& G, double h) {
  double s = 0.0;
  for (const auto& g : G) s += g.abs2().sum();
  return std::sqrt(s) * h;
}

inline EnvelopeState solve_newton(const CmeSystem& sys, const EnvelopeState& A0, const NewtonOptions& opt = {},
                                  NewtonReport* report = nullptr) {
  EnvelopeState A = A0;
  if (opt.enforce_pt) {
    if (A.pt_defect() > 1e-10 && A.max_abs() > 0) A.set_flat(pt_project_flat(A, A.flat()));
    A.pt = true;
  }
  NewtonReport rep;
  const double h = A.h();
  const LinearMap ptproj = [&](const Eigen::VectorXcd& v) { return opt.enforce_pt ? pt_project_flat(A, v) : v; };
  for (int it = 0; it <= opt.max_iter; ++it) {
    const auto G = cme_residual(sys, A);
    const double r = envelope_norm(G, h);
    const double an = A.norm();
    rep.residuals.push_back(r);
    if (r <= opt.tol * std::max(1.0, an * an * an)) {
      rep.iterations = it;
      rep.final_residual = r;
      break;
    }
    if (it == opt.max_iter)
      throw ConvergenceError("solve_newton: no convergence in " + std::to_string(opt.max_iter) + " iterations", rep.residuals);
    const CmeJacobian J(sys, A);
    const LinearMap op = [&](const Eigen::VectorXcd& v) { return J.apply(v); };
    const LinearMap pre = [&](const Eigen::VectorXcd& v) { return J.apply_linear_inverse(v); };
    Eigen::VectorXcd rhs = -flatten(G);
    if (opt.enforce_pt) rhs = pt_project_flat(A, rhs);
    const KrylovResult kr = gmres(op, rhs, pre, opt.gmres, ptproj);
    Eigen::VectorXcd step = kr.x;
    // backtracking on ||G||
    double lambda = 1.0;
    EnvelopeState trial = A;
    for (int ls = 0; ls < 30; ++ls) {
      trial.set_flat(A.flat() + lambda * step);
      const double rt = envelope_norm(cme_residual(sys, trial), h);
      if (rt < (1.0 - 1e-4 * lambda) * r || lambda < 1e-6) break;
      lambda *= 0.5;
    }
    if (opt.enforce_pt) {
      const double drift = trial.pt_defect();
      if (drift > opt.pt_drift_tol)
        throw ConvergenceError("solve_newton: iterate left the PT subspace (defect " + std::to_string(drift) + ")", rep.residuals);
      trial.set_flat(pt_project_flat(trial, trial.flat()));
    }
    A = trial;
  }
  A.pt = opt.enforce_pt;
  const double scale = std::sqrt(std::abs(sys.Omega) / std::max(sys.coefficient_scale(), 1e-300));
  A.trivial = A.max_abs() < 1e-8 * scale;
  rep.boundary_ratio = A.boundary_ratio();
  rep.decay_ok = A.trivial || rep.boundary_ratio <= opt.decay_tol;
  if (report) *report = rep;
  return A;
}

struct NondegeneracyOptions {
  int count = 6;
  int block = 10;
  int max_iter = 60;
  double ritz_tol = 1e-9;
  double null_rel = 1e-6;  // null_tol = null_rel * median singular value
  CgOptions cg{3000, 1e-12};
};

struct NondegeneracyReport {
  std::vector<double> singular_values;
  double median_singular = 0.0;
  double null_tol = 0.0;
  int null_count = 0;
  double subspace_angle = 0.0;
  double pt_min_singular = 0.0;
  bool degenerate = false;
  bool not_applicable = false;
  int iterations = 0;
  std::string verdict;
};

namespace detail {

// Smallest singular triplets of J by inverse subspace iteration on J^T J.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXcd> smallest_singular(const CmeJacobian& J, const EnvelopeState& shape,
                                                                      bool pt_only, const NondegeneracyOptions& opt,
                                                                      int* iterations, double shift = 0.0) {
  const Eigen::Index n = static_cast<Eigen::Index>(shape.N) * shape.M * shape.M;
  auto proj = [&](const Eigen::VectorXcd& v) { return pt_only ? pt_project_flat(shape, v) : v; };
  const LinearMap jtj = [&](const Eigen::VectorXcd& v) { return proj(J.apply_transpose(J.apply(proj(v)))); };
  // CG runs on J^T J + shift, which stays positive when J has exact null vectors.
  const LinearMap jtj_shifted = [&](const Eigen::VectorXcd& v) { return Eigen::VectorXcd(jtj(v) + shift * proj(v)); };
  const LinearMap pre = [&](const Eigen::VectorXcd& v) { return proj(J.apply_linear_inverse(v, 2)); };
  std::mt19937_64 rng(20240607);
  std::normal_distribution<double> nd;
  const int b = opt.block;
  Eigen::MatrixXcd X(n, b);
  for (int j = 0; j < b; ++j) {
    Eigen::VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = cdouble(nd(rng), nd(rng));
    X.col(j) = proj(v);
  }
  auto orth = [&](Eigen::MatrixXcd& Y) {
    // real Gram-Schmidt (twice) in the real inner product
    for (int pass = 0; pass < 2; ++pass)
      for (int j = 0; j < Y.cols(); ++j) {
        for (int i = 0; i < j; ++i) Y.col(j) -= rdot(Y.col(i), Y.col(j)) * Y.col(i);
        Y.col(j) /= Y.col(j).norm();
      }
  };
  orth(X);
  Eigen::VectorXd vals;
  Eigen::MatrixXcd vecs;
  for (int it = 1; it <= opt.max_iter; ++it) {
    Eigen::MatrixXcd Y(n, b);
    for (int j = 0; j < b; ++j) Y.col(j) = proj(pcg(jtj_shifted, X.col(j), pre, opt.cg).x);
    orth(Y);
    // Rayleigh-Ritz with the real Gram matrix of J Y
    Eigen::MatrixXcd JY(n, b);
    for (int j = 0; j < b; ++j) JY.col(j) = J.apply(Y.col(j));
    Eigen::MatrixXd T(b, b);
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < b; ++j) T(i, j) = rdot(JY.col(i), JY.col(j));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (T + T.transpose()));
    X = Y * es.eigenvectors().cast<cdouble>();
    vals = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    // residual test on the wanted count
    double worst = 0.0;
    const int want = std::min(opt.count, b);
    for (int j = 0; j < want; ++j) {
      const Eigen::VectorXcd r = jtj(X.col(j)) - vals(j) * vals(j) * X.col(j);
      worst = std::max(worst, r.norm() / std::max(1.0, vals(want - 1) * vals(want - 1)));
    }
    if (iterations) *iterations = it;
    if (worst < opt.ritz_tol) break;
  }
  vecs = X;
  return {vals, vecs};
}

}  // namespace detail

inline NondegeneracyReport nondegeneracy_check(const CmeSystem& sys, const EnvelopeState& A, const NondegeneracyOptions& opt = {}) {
  NondegeneracyReport rep;
  const CmeJacobian J(sys, A);
  // median singular value approximated by the linear symbol (two real
  // directions per Fourier mode and component)
  std::vector<double> mags;
  for (const auto& s : J.symbols())
    for (Eigen::Index i = 0; i < s.size(); ++i) mags.push_back(std::abs(s(i)));
  std::nth_element(mags.begin(), mags.begin() + mags.size() / 2, mags.end());
  rep.median_singular = mags[mags.size() / 2];
  rep.null_tol = opt.null_rel * rep.median_singular;
  const double scale = std::sqrt(std::abs(sys.Omega) / std::max(sys.coefficient_scale(), 1e-300));
  if (A.max_abs() < 1e-8 * scale) {
    rep.not_applicable = true;
    rep.verdict = "not applicable: trivial state";
  }
  const double shift = rep.null_tol * rep.null_tol;
  auto [vals, vecs] = detail::smallest_singular(J, A, false, opt, &rep.iterations, shift);
  for (int i = 0; i < std::min<int>(opt.count, static_cast<int>(vals.size())); ++i) rep.singular_values.push_back(vals(i));
  for (double s : rep.singular_values) rep.null_count += s < rep.null_tol;
  // invariance modes d1 A, d2 A, iA
  const Eigen::Index n = static_cast<Eigen::Index>(A.N) * A.M * A.M;
  Eigen::MatrixXcd W(n, 3);
  {
    EnvelopeState d1 = A, d2 = A, ph = A;
    for (int j = 0; j < A.N; ++j) {
      Eigen::ArrayXXcd hat = fft_forward(A.A[j]);
      Eigen::ArrayXXcd h1 = hat, h2 = hat;
      for (int i2 = 0; i2 < A.M; ++i2)
        for (int i1 = 0; i1 < A.M; ++i1) {
          const bool nyq1 = A.M % 2 == 0 && i1 == A.M / 2, nyq2 = A.M % 2 == 0 && i2 == A.M / 2;
          h1(i1, i2) *= nyq1 ? 0.0 : kI * A.xi(i1);
          h2(i1, i2) *= nyq2 ? 0.0 : kI * A.xi(i2);
        }
      d1.A[j] = fft_backward(h1);
      d2.A[j] = fft_backward(h2);
      ph.A[j] = kI * A.A[j];
    }
    W.col(0) = d1.flat();
    W.col(1) = d2.flat();
    W.col(2) = ph.flat();
    for (int pass = 0; pass < 2; ++pass)
      for (int j = 0; j < 3; ++j) {
        for (int i = 0; i < j; ++i) W.col(j) -= rdot(W.col(i), W.col(j)) * W.col(i);
        W.col(j) /= W.col(j).norm();
      }
  }
  const int k = std::min(rep.null_count, 3);
  if (k > 0) {
    Eigen::MatrixXd C(k, 3);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < 3; ++j) C(i, j) = rdot(vecs.col(i), W.col(j));
    const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(C).singularValues();
    rep.subspace_angle = std::acos(std::min(1.0, s.minCoeff()));
    if (k < 3) rep.subspace_angle = kPi / 2;
  } else {
    rep.subspace_angle = kPi / 2;
  }
  NondegeneracyOptions popt = opt;
  popt.count = 1;
  popt.block = 4;
  auto [pvals, pvecs] = detail::smallest_singular(J, A, true, popt, nullptr, shift);
  (void)pvecs;
  rep.pt_min_singular = pvals(0);
  const bool fourth_small = rep.singular_values.size() > 3 && rep.singular_values[3] < 10 * rep.null_tol;
  rep.degenerate = rep.null_count != 3 || fourth_small || rep.pt_min_singular <= rep.null_tol;
  if (!rep.not_applicable)
    rep.verdict = rep.degenerate ? "degenerate or near-degenerate" : "non-degenerate";
  return rep;
}

// Checks that the subspace {A_z = 0 for z in zeros, A_a = A_b for (a,b) in
// equal} is invariant under the CME vector field, at random amplitudes.
inline double reduction_defect(const CmeSystem& sys, const std::vector<int>& zeros, const std::vector<std::pair<int, int>>& equal,
                               unsigned seed = 7) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  EnvelopeState s(sys.N, 4, 1.0);
  for (int j = 0; j < sys.N; ++j)
    for (Eigen::Index i = 0; i < s.A[j].size(); ++i) s.A[j](i) = cdouble(nd(rng), nd(rng));
  for (int z : zeros) s.A[z].setZero();
  for (auto [a, b] : equal) s.A[a] = s.A[b];
  const auto n = nonlinear_term(sys, s);
  double d = 0.0, scale = 0.0;
  for (const auto& x : n) scale = std::max(scale, x.abs().maxCoeff());
  for (int z : zeros) d = std::max(d, n[z].abs().maxCoeff());
  for (auto [a, b] : equal) {
    d = std::max(d, (n[a] - n[b]).abs().maxCoeff());
    d = std::max(d, (sys.H[a] - sys.H[b]).norm() * scale / std::max(sys.H[b].norm(), 1e-300));
  }
  return scale > 0 ? d / scale : d;
}

}  // namespace gapsol
