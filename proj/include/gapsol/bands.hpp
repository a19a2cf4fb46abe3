#pragma once

#include "gapsol/bloch.hpp"
#include "gapsol/hash.hpp"
#include "gapsol/lattice.hpp"
#include "gapsol/parallel.hpp"

#include <functional>
#include <numeric>
#include <optional>
#include <sstream>

namespace gapsol {

struct BandStructure {
  std::vector<Vec2> k;
  std::vector<double> arclength;  // empty for BZ grids
  Eigen::MatrixXd omega;          // rows: k, cols: bands
  int grid_n = 0;                 // n for an n x n BzGrid table, 0 for paths
  double kappa = 0.0;
  int cutoff = 0;
  std::string medium_hash;

  int bands() const { return static_cast<int>(omega.cols()); }
  int points() const { return static_cast<int>(k.size()); }
};

// Sorted omega^2 at k, at least as many values as requested.
using BandEvaluator = std::function<Eigen::VectorXd(const Vec2&, int)>;

inline std::string medium_hash(const BlochSolver& s) {
  std::uint64_t h = fnv1a64(s.eps().data(), sizeof(double) * s.eps().size());
  const double kv = s.kappa();
  h = fnv1a64(&kv, sizeof kv, h);
  return hex64(h);
}

inline BandEvaluator evaluator(const BlochSolver& solver) {
  return [&solver](const Vec2& k, int count) { return solver.eigenvalues(k, count); };
}

inline BandStructure sweep(const BlochSolver& solver, const std::vector<Vec2>& ks, int n_max, int threads = 1) {
  if (ks.empty()) throw std::invalid_argument("sweep: empty k set");
  if (n_max < 1) throw std::invalid_argument("sweep: n_max must be positive");
  BandStructure bs;
  bs.k = ks;
  bs.omega.resize(static_cast<Eigen::Index>(ks.size()), n_max);
  bs.kappa = solver.kappa();
  bs.cutoff = solver.cutoff();
  bs.medium_hash = medium_hash(solver);
  parallel_for(static_cast<int>(ks.size()), threads, [&](int i) {
    try {
      const Eigen::VectorXd w2 = solver.eigenvalues(ks[i], n_max);
      if (w2.size() < n_max) throw std::invalid_argument("basis smaller than n_max");
      for (int n = 0; n < n_max; ++n) bs.omega(i, n) = std::sqrt(std::max(0.0, w2(n)));
    } catch (const std::exception& e) {
      std::ostringstream os;
      os.precision(17);
      os << "sweep: failure at k = (" << ks[i].x() << ", " << ks[i].y() << "): " << e.what();
      throw std::runtime_error(os.str());
    }
  });
  return bs;
}

inline BandStructure sweep_path(const BlochSolver& solver, const KPath& path, int n_max, int threads = 1) {
  const auto s = path.sample();
  BandStructure bs = sweep(solver, s.k, n_max, threads);
  bs.arclength = s.arclength;
  return bs;
}

inline BandStructure sweep_grid(const BlochSolver& solver, int n, int n_max, int threads = 1) {
  const BzGrid g = BzGrid::make(solver.lattice(), n);
  BandStructure bs = sweep(solver, g.k, n_max, threads);
  bs.grid_n = n;
  return bs;
}

struct Gap {
  double lo = 0.0, hi = 0.0;
  int lower_band = 0;  // 0 denotes the floor below band 1
  int upper_band = 0;
  double width() const { return hi - lo; }
};

// Open intervals (max omega_n, min omega_{n+1}) of positive width. With
// include_floor the interval (0, min omega_1) is reported as well.
inline std::vector<Gap> find_gaps(const BandStructure& bs, bool include_floor = false) {
  std::vector<Gap> out;
  if (bs.points() == 0) return out;
  if (include_floor) {
    const double lo1 = bs.omega.col(0).minCoeff();
    if (lo1 > 0) out.push_back({0.0, lo1, 0, 1});
  }
  // Bands may overlap non-adjacently; the gap above band n is open only if
  // it clears the maxima of all bands <= n.
  double running_max = -INFINITY;
  for (int n = 0; n + 1 < bs.bands(); ++n) {
    running_max = std::max(running_max, bs.omega.col(n).maxCoeff());
    double next_min = INFINITY;
    for (int m = n + 1; m < bs.bands(); ++m) next_min = std::min(next_min, bs.omega.col(m).minCoeff());
    if (next_min > running_max) out.push_back({running_max, next_min, n + 1, n + 2});
  }
  return out;
}

struct HessianOptions {
  double h = 0.0;          // default 5e-3 * min|b_i|
  int retries = 3;
  double agree_tol = 1e-4;
  double retry_tol = 1e-3;
  bool require_simple = true;
  double gap_tol = -1.0;   // default 1e-6 max(1, omega^2)
};

struct HessianResult {
  Mat2 h = Mat2::Zero();
  double step = 0.0;
  double richardson_rel = 0.0;
  std::vector<std::string> warnings;
};

namespace detail {
// omega of a 1-based band on the 9-point stencil, with simplicity check.
inline Mat2 stencil_hessian(const BandEvaluator& eval, const Vec2& k, int band, double h, bool require_simple,
                            double gap_tol_in) {
  double f[3][3];
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b) {
      const Vec2 kk = k + Vec2(a * h, b * h);
      const Eigen::VectorXd w2 = eval(kk, band + 1);
      if (w2.size() < band) throw std::invalid_argument("hessian: evaluator returned too few bands");
      const double v = w2(band - 1);
      if (require_simple) {
        const double tol = gap_tol_in < 0 ? default_gap_tol(v) : gap_tol_in;
        double margin = INFINITY;
        if (band >= 2) margin = std::min(margin, v - w2(band - 2));
        if (w2.size() > band) margin = std::min(margin, w2(band) - v);
        if (!(margin > tol)) {
          std::ostringstream os;
          os << "band " << band << " crosses a neighbour inside the stencil at (" << kk.x() << ", " << kk.y() << "), margin "
             << margin;
          throw AssumptionError("A3 (geometric simplicity)", os.str());
        }
      }
      f[a + 1][b + 1] = std::sqrt(std::max(0.0, v));
    }
  Mat2 H;
  H(0, 0) = (f[2][1] - 2 * f[1][1] + f[0][1]) / (h * h);
  H(1, 1) = (f[1][2] - 2 * f[1][1] + f[1][0]) / (h * h);
  H(0, 1) = H(1, 0) = (f[2][2] - f[2][0] - f[0][2] + f[0][0]) / (4 * h * h);
  return H;
}
}  // namespace detail

// Hessian of omega_band at k by central differences with a Richardson check.
inline HessianResult hessian(const BandEvaluator& eval, const Lattice& lat, const Vec2& k, int band,
                             const HessianOptions& opt = {}) {
  double h = opt.h > 0 ? opt.h : 5e-3 * std::min(lat.b1().norm(), lat.b2().norm());
  HessianResult r;
  for (int attempt = 0; attempt <= opt.retries; ++attempt) {
    const Mat2 h1 = detail::stencil_hessian(eval, k, band, h, opt.require_simple, opt.gap_tol);
    const Mat2 h2 = detail::stencil_hessian(eval, k, band, 0.5 * h, opt.require_simple, opt.gap_tol);
    const double scale = std::max(h2.norm(), 1e-300);
    r.richardson_rel = (h1 - h2).norm() / scale;
    r.h = (4.0 * h2 - h1) / 3.0;
    r.step = h;
    if (r.richardson_rel <= opt.retry_tol) {
      if (r.richardson_rel > opt.agree_tol)
        r.warnings.push_back("Richardson steps agree only to " + std::to_string(r.richardson_rel));
      return r;
    }
    r.warnings.push_back("Richardson disagreement " + std::to_string(r.richardson_rel) + " at h=" + std::to_string(h) +
                         "; retrying with h/4");
    h *= 0.25;
  }
  r.warnings.push_back("Richardson check failed after retries");
  return r;
}

enum class EdgeSide { lower, upper };

struct EdgeOptions {
  double refine_tol = 1e-8;
  double edge_tol = -1.0;  // on omega; default max(refine_tol, 1e-10 * omega*)
  double gap_tol = -1.0;
  HessianOptions hess;
  int max_refine_iter = 300;
};

struct BandEdge {
  double omega_star = 0.0;
  int Omega = 0;
  int n_star = 0;
  EdgeSide side = EdgeSide::upper;
  Gap gap;
  std::vector<Vec2> kpoints;
  std::vector<double> omegas;
  std::vector<double> margins;
  std::vector<Mat2> hessians;
  std::vector<std::vector<int>> orbits;
  bool orbit_closed = false;
  int definiteness = 0;  // +1 positive, -1 negative
  double simple_fraction = -1.0;
  std::vector<std::string> warnings;

  int N() const { return static_cast<int>(kpoints.size()); }
};

namespace detail {

struct Refined {
  Vec2 k;
  double omega;
  bool converged = true;
  double last_step = 0.0;
};

// Trust-region Newton ascent (maximize) or descent with derivatives from a
// 3x3 stencil; a step is kept only if it improves the band value.
inline Refined refine_extremum(const BandEvaluator& eval, const Lattice& lat, Vec2 k, int band, double h0, bool maximize,
                               const EdgeOptions& opt) {
  auto w = [&](const Vec2& q) { return std::sqrt(std::max(0.0, eval(q, band)(band - 1))); };
  const double sgn = maximize ? 1.0 : -1.0;
  const double bscale = std::min(lat.b1().norm(), lat.b2().norm());
  const double hmin = 1e-4 * bscale;
  double h = h0, radius = h0;
  double last = INFINITY;
  double fk = w(k);
  for (int it = 0; it < opt.max_refine_iter; ++it) {
    double f[3][3];
    for (int a = -1; a <= 1; ++a)
      for (int b = -1; b <= 1; ++b) f[a + 1][b + 1] = (a == 0 && b == 0) ? fk : w(k + Vec2(a * h, b * h));
    const Vec2 g((f[2][1] - f[0][1]) / (2 * h), (f[1][2] - f[1][0]) / (2 * h));
    Mat2 H;
    H(0, 0) = (f[2][1] - 2 * f[1][1] + f[0][1]) / (h * h);
    H(1, 1) = (f[1][2] - 2 * f[1][1] + f[1][0]) / (h * h);
    H(0, 1) = H(1, 0) = (f[2][2] - f[2][0] - f[0][2] + f[0][0]) / (4 * h * h);
    // stencil points that already improve on k
    Vec2 best_off = Vec2::Zero();
    double best_f = fk;
    for (int a = -1; a <= 1; ++a)
      for (int b = -1; b <= 1; ++b)
        if (sgn * (f[a + 1][b + 1] - best_f) > 0) {
          best_f = f[a + 1][b + 1];
          best_off = Vec2(a * h, b * h);
        }
    Eigen::SelfAdjointEigenSolver<Mat2> es(Mat2(-sgn * H));
    const bool newton = es.eigenvalues().minCoeff() > 0;
    const Vec2 full = newton ? Vec2(-H.inverse() * g) : Vec2(sgn * g);
    bool moved = false;
    double r = radius;
    for (int tries = 0; tries < 20 && !moved && r >= opt.refine_tol; ++tries) {
      Vec2 d = full;
      if (!newton || d.norm() > r) d = d.norm() > 0 ? Vec2(r * d.normalized()) : Vec2::Zero();
      const double fd = w(k + d);
      if (sgn * (fd - fk) > -1e-14 * std::abs(fk)) {
        const bool capped = d.norm() >= 0.999 * r;
        k += d;
        fk = fd;
        last = d.norm();
        radius = capped ? std::min(4.0 * h0, 2.0 * r) : std::max(r, 2.0 * last);
        moved = true;
      } else {
        r *= 0.25;
      }
    }
    if (!moved && best_off.norm() > 0) {
      // the model is poor here but a stencil point is better
      k += best_off;
      fk = best_f;
      last = best_off.norm();
      radius = h;
      moved = true;
    }
    if (!moved) {
      // derivatives at this stencil are too coarse to give an improving step
      last = full.norm();
      if (h <= hmin) break;
      h = std::max(hmin, 0.25 * h);
      radius = std::max(radius, h);
      continue;
    }
    if (last < opt.refine_tol) return {k, fk, true, last};
    h = std::max(hmin, std::min(h0, 2.0 * last));
  }
  // Steps below the smallest stencil are at the level of eigenvalue noise on
  // very flat bands; accept the point and let the caller warn.
  if (last < hmin) return {k, w(k), false, last};
  throw ConvergenceError("locate_edge: extremum refinement did not reach refine_tol", {});
}

// Table-only refinement: one quadratic fit on the grid stencil, no evaluator.
inline Refined table_extremum(const BandStructure& bs, const Lattice& lat, int i, int j, int band) {
  const int n = bs.grid_n;
  BzGrid g;
  g.n = n;
  auto v = [&](int a, int b) { return bs.omega(g.index(i + a, j + b), band - 1); };
  // fit in reciprocal coordinates (s,t) with unit grid steps
  const Vec2 gs((v(1, 0) - v(-1, 0)) / 2, (v(0, 1) - v(0, -1)) / 2);
  Mat2 H;
  H(0, 0) = v(1, 0) - 2 * v(0, 0) + v(-1, 0);
  H(1, 1) = v(0, 1) - 2 * v(0, 0) + v(0, -1);
  H(0, 1) = H(1, 0) = (v(1, 1) - v(1, -1) - v(-1, 1) + v(-1, -1)) / 4;
  Vec2 d = Vec2::Zero();
  if (std::abs(H.determinant()) > 1e-300) d = -H.inverse() * gs;
  if (d.norm() > 1.0) d = Vec2::Zero();
  const Vec2 k = ((i + d.x()) / n) * lat.b1() + ((j + d.y()) / n) * lat.b2();
  const double val = v(0, 0) + gs.dot(d) + 0.5 * d.dot(H * d);
  return {k, val};
}

}  // namespace detail

// Extremal points of the band bounding `gap` on `side`, refined, grouped into
// symmetry orbits and checked for simplicity and Hessian definiteness.
inline BandEdge locate_edge(const BandStructure& bs, const Gap& gap, EdgeSide side, const Lattice& lat,
                            const BandEvaluator* eval = nullptr, const EdgeOptions& opt = {}) {
  if (bs.grid_n <= 0) throw std::invalid_argument("locate_edge: needs a BZ grid table");
  BandEdge e;
  e.side = side;
  e.gap = gap;
  e.n_star = side == EdgeSide::lower ? gap.lower_band : gap.upper_band;
  if (e.n_star < 1 || e.n_star > bs.bands()) throw std::invalid_argument("locate_edge: band index outside the table");
  const bool maximize = side == EdgeSide::lower;
  e.Omega = maximize ? +1 : -1;
  const int n = bs.grid_n;
  BzGrid g;
  g.n = n;
  const Eigen::VectorXd col = bs.omega.col(e.n_star - 1);
  const double ext = maximize ? col.maxCoeff() : col.minCoeff();
  int iext = 0;
  for (int i = 0; i < col.size(); ++i)
    if (col(i) == ext) {
      iext = i;
      break;
    }
  double local_var = 0.0;
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b) local_var = std::max(local_var, std::abs(col(g.index(iext % n + a, iext / n + b)) - ext));
  const double prefilter = 2.0 * local_var + 1e-12 * std::max(1.0, std::abs(ext));

  std::vector<detail::Refined> cands;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double v = col(g.index(i, j));
      if (std::abs(v - ext) > prefilter) continue;
      bool is_ext = true;
      for (int a = -1; a <= 1 && is_ext; ++a)
        for (int b = -1; b <= 1; ++b) {
          if (a == 0 && b == 0) continue;
          const double u = col(g.index(i + a, j + b));
          if (maximize ? u > v : u < v) {
            is_ext = false;
            break;
          }
        }
      if (!is_ext) continue;
      if (eval) {
        const double h0 = 0.5 * std::min(lat.b1().norm(), lat.b2().norm()) / n;
        cands.push_back(detail::refine_extremum(*eval, lat, bs.k[g.index(i, j)], e.n_star, h0, maximize, opt));
      } else {
        cands.push_back(detail::table_extremum(bs, lat, i, j, e.n_star));
      }
    }
  if (cands.empty()) throw std::runtime_error("locate_edge: no extremum found");
  for (const auto& c : cands)
    if (!c.converged)
      e.warnings.push_back("refinement stalled at step " + std::to_string(c.last_step) + " near (" + std::to_string(c.k.x()) +
                           ", " + std::to_string(c.k.y()) + ")");
  // reduce to the zone and merge duplicates
  const double kscale = std::min(lat.b1().norm(), lat.b2().norm());
  // Refinement carries a small stencil bias, so copies of one extremum are
  // merged within a radius far below the grid spacing.
  const double merge = 1e-3 * kscale;
  auto same = [&](const Vec2& p, const Vec2& q) { return (lat.reduce_to_bz(p - q)).norm() < merge; };
  const auto group = lat.point_group();
  std::vector<detail::Refined> uniq;
  for (auto c : cands) {
    c.k = lat.reduce_to_bz(c.k);
    if (eval) {
      // average over the stabilizer to put the point back on its symmetry line
      Vec2 shift = Vec2::Zero();
      int count = 0;
      for (const auto& R : group) {
        const Vec2 d = lat.reduce_to_bz(R * c.k - c.k);
        if (d.norm() < merge) {
          shift += d;
          ++count;
        }
      }
      c.k = lat.reduce_to_bz(c.k + shift / count);
      c.omega = std::sqrt(std::max(0.0, (*eval)(c.k, e.n_star)(e.n_star - 1)));
    }
    bool dup = false;
    for (const auto& u : uniq)
      for (const auto& R : group) dup = dup || same(R * u.k, c.k);
    if (!dup) uniq.push_back(c);
  }
  // A grid point on a symmetry line can refine towards one of several
  // equivalent extrema only; complete with the point-group images.
  if (eval) {
    const size_t n0 = uniq.size();
    for (size_t u = 0; u < n0; ++u)
      for (const auto& R : group) {
        const Vec2 img = lat.reduce_to_bz(R * uniq[u].k);
        bool dup = false;
        for (const auto& v : uniq)
          if (same(v.k, img)) dup = true;
        if (dup) continue;
        // The operator commutes with the point group, so the image is an
        // extremum of the same height.
        detail::Refined r;
        r.k = img;
        r.omega = std::sqrt(std::max(0.0, (*eval)(img, e.n_star)(e.n_star - 1)));
        uniq.push_back(r);
      }
  }
  double best = uniq[0].omega;
  for (const auto& u : uniq) best = maximize ? std::max(best, u.omega) : std::min(best, u.omega);
  e.omega_star = best;
  const double edge_tol = opt.edge_tol > 0 ? opt.edge_tol : std::max(opt.refine_tol, 1e-10 * std::abs(best));
  for (const auto& u : uniq)
    if (std::abs(u.omega - best) < edge_tol) {
      e.kpoints.push_back(u.k);
      e.omegas.push_back(u.omega);
    }
  // deterministic order: by angle then radius
  std::vector<int> idx(e.kpoints.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    const Vec2& ka = e.kpoints[a];
    const Vec2& kb = e.kpoints[b];
    const double ra = ka.norm(), rb = kb.norm();
    if (std::abs(ra - rb) > 1e-9 * kscale) return ra < rb;
    auto ang = [](const Vec2& v) {
      double t = std::atan2(v.y(), v.x());
      if (t < -1e-12) t += 2 * kPi;
      return t;
    };
    return ang(ka) < ang(kb);
  });
  {
    std::vector<Vec2> kp;
    std::vector<double> om;
    for (int i : idx) {
      kp.push_back(e.kpoints[i]);
      om.push_back(e.omegas[i]);
    }
    e.kpoints = kp;
    e.omegas = om;
  }

  // simplicity and Hessians
  if (eval) {
    for (const auto& k : e.kpoints) {
      const Eigen::VectorXd w2 = (*eval)(k, e.n_star + 1);
      const double v = w2(e.n_star - 1);
      double margin = INFINITY;
      if (e.n_star >= 2) margin = std::min(margin, v - w2(e.n_star - 2));
      if (w2.size() > e.n_star) margin = std::min(margin, w2(e.n_star) - v);
      const double tol = opt.gap_tol > 0 ? opt.gap_tol : default_gap_tol(v);
      if (!(margin > tol)) {
        std::ostringstream os;
        os << "omega_" << e.n_star << " is not simple at k = (" << k.x() << ", " << k.y() << "), margin " << margin;
        throw AssumptionError("A3 (eigenvalues at the level set are all geometrically simple)", os.str());
      }
      e.margins.push_back(margin);
      HessianOptions ho = opt.hess;
      const HessianResult hr = hessian(*eval, lat, k, e.n_star, ho);
      for (const auto& w : hr.warnings) e.warnings.push_back(w);
      e.hessians.push_back(hr.h);
    }
  } else {
    for (size_t j = 0; j < e.kpoints.size(); ++j) {
      // table Hessian in Cartesian coordinates from the reciprocal-grid fit
      const Vec2 f = lat.to_reciprocal_coords(e.kpoints[j]) * n;
      const int i0 = static_cast<int>(std::lround(f.x())), j0 = static_cast<int>(std::lround(f.y()));
      auto v = [&](int a, int b) { return bs.omega(g.index(i0 + a, j0 + b), e.n_star - 1); };
      Mat2 Hs;
      Hs(0, 0) = v(1, 0) - 2 * v(0, 0) + v(-1, 0);
      Hs(1, 1) = v(0, 1) - 2 * v(0, 0) + v(0, -1);
      Hs(0, 1) = Hs(1, 0) = (v(1, 1) - v(1, -1) - v(-1, 1) + v(-1, -1)) / 4;
      Mat2 B;
      B.col(0) = lat.b1() / n;
      B.col(1) = lat.b2() / n;
      const Mat2 Binv = B.inverse();
      e.hessians.push_back(Binv.transpose() * Hs * Binv);
      e.warnings.push_back("Hessian from table second differences (no band evaluator)");
    }
  }
  int sign = 0;
  for (const auto& H : e.hessians) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(H);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    const double scale = std::max(std::abs(lo), std::abs(hi));
    int s = 0;
    if (lo > 1e-8 * scale && scale > 0) s = +1;
    if (hi < -1e-8 * scale && scale > 0) s = -1;
    if (s == 0 || (sign != 0 && s != sign))
      throw AssumptionError("A4 (Hessian definite with one sign at all level-set points)",
                            "eigenvalues " + std::to_string(lo) + ", " + std::to_string(hi));
    sign = s;
  }
  e.definiteness = sign;
  if ((maximize && sign > 0) || (!maximize && sign < 0))
    e.warnings.push_back("Hessian sign disagrees with the edge side");

  // symmetry orbits
  std::vector<int> orbit_of(e.kpoints.size(), -1);
  e.orbit_closed = true;
  for (size_t j = 0; j < e.kpoints.size(); ++j) {
    if (orbit_of[j] >= 0) continue;
    std::vector<int> orbit;
    for (const auto& R : group) {
      const Vec2 img = lat.reduce_to_bz(R * e.kpoints[j]);
      int match = -1;
      for (size_t m = 0; m < e.kpoints.size(); ++m)
        if (same(img, e.kpoints[m])) match = static_cast<int>(m);
      if (match < 0) {
        e.orbit_closed = false;
        continue;
      }
      if (std::find(orbit.begin(), orbit.end(), match) == orbit.end()) orbit.push_back(match);
    }
    std::sort(orbit.begin(), orbit.end());
    for (int m : orbit) orbit_of[m] = static_cast<int>(e.orbits.size());
    e.orbits.push_back(orbit);
  }

  // fraction of grid points where omega_{n*} is simple
  if (bs.bands() > e.n_star) {
    int simple = 0;
    for (int i = 0; i < bs.points(); ++i) {
      const double v = bs.omega(i, e.n_star - 1) * bs.omega(i, e.n_star - 1);
      double margin = bs.omega(i, e.n_star) * bs.omega(i, e.n_star) - v;
      if (e.n_star >= 2) margin = std::min(margin, v - bs.omega(i, e.n_star - 2) * bs.omega(i, e.n_star - 2));
      simple += margin > default_gap_tol(v);
    }
    e.simple_fraction = static_cast<double>(simple) / bs.points();
  }
  return e;
}

// Per-band max of |omega_n^2(k) - omega_n^2(k')| / |k - k'| over nearest
// neighbours (grid: both reciprocal directions with wrap; path: consecutive).
inline Eigen::VectorXd lipschitz_probe(const BandStructure& bs, const Lattice& lat) {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(bs.bands());
  auto visit = [&](int a, int b, double dist) {
    for (int n = 0; n < bs.bands(); ++n) {
      const double d = std::abs(bs.omega(a, n) * bs.omega(a, n) - bs.omega(b, n) * bs.omega(b, n)) / dist;
      q(n) = std::max(q(n), d);
    }
  };
  if (bs.grid_n > 0) {
    const int n = bs.grid_n;
    BzGrid g;
    g.n = n;
    const double d1 = lat.b1().norm() / n, d2 = lat.b2().norm() / n;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        visit(g.index(i, j), g.index(i + 1, j), d1);
        visit(g.index(i, j), g.index(i, j + 1), d2);
      }
  } else {
    for (int i = 0; i + 1 < bs.points(); ++i) {
      const double d = (bs.k[i + 1] - bs.k[i]).norm();
      if (d > 0) visit(i, i + 1, d);
    }
  }
  return q;
}

}  // namespace gapsol
