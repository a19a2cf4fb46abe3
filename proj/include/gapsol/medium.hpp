#pragma once

#include "gapsol/common.hpp"
#include "gapsol/fft.hpp"
#include "gapsol/field.hpp"
#include "gapsol/lattice.hpp"

#include <array>
#include <functional>
#include <optional>

namespace gapsol {

// Real samples on the cell-fractional grid x_ij = (i/n1) a1 + (j/n2) a2.
struct PeriodicScalarField {
  Lattice lattice;
  Eigen::ArrayXXd samples;

  int n1() const { return static_cast<int>(samples.rows()); }
  int n2() const { return static_cast<int>(samples.cols()); }
};

// Fourier coefficients c(m,n) of K = m b1 + n b2 for |m|,|n| <= cutoff.
struct FourierCoefficients {
  int cutoff = 0;
  Eigen::ArrayXXcd c;
  cdouble operator()(int m, int n) const {
    if (std::abs(m) > cutoff || std::abs(n) > cutoff) return 0.0;
    return c(m + cutoff, n + cutoff);
  }
};

inline FourierCoefficients fourier_coefficients(const PeriodicScalarField& f, int cutoff) {
  if (cutoff < 0) throw std::invalid_argument("fourier_coefficients: negative cutoff");
  if (f.n1() < 2 * cutoff + 1 || f.n2() < 2 * cutoff + 1)
    throw std::invalid_argument("fourier_coefficients: grid " + std::to_string(f.n1()) + "x" + std::to_string(f.n2()) +
                                " below Nyquist for cutoff " + std::to_string(cutoff));
  const Eigen::ArrayXXcd hat = fft_forward(f.samples);
  FourierCoefficients out;
  out.cutoff = cutoff;
  out.c.resize(2 * cutoff + 1, 2 * cutoff + 1);
  for (int n = -cutoff; n <= cutoff; ++n)
    for (int m = -cutoff; m <= cutoff; ++m) out.c(m + cutoff, n + cutoff) = hat(slot_index(m, f.n1()), slot_index(n, f.n2()));
  return out;
}

// Synthesize grid samples from coefficients (real part).
inline PeriodicScalarField synthesize(const Lattice& lat, const FourierCoefficients& c, int n1, int n2) {
  if (n1 < 2 * c.cutoff + 1 || n2 < 2 * c.cutoff + 1) throw std::invalid_argument("synthesize: grid too coarse");
  Eigen::ArrayXXcd hat = Eigen::ArrayXXcd::Zero(n1, n2);
  for (int n = -c.cutoff; n <= c.cutoff; ++n)
    for (int m = -c.cutoff; m <= c.cutoff; ++m) hat(slot_index(m, n1), slot_index(n, n2)) = c(m, n);
  return {lat, fft_backward(hat).real()};
}

// Spectral resampling; the Nyquist row of an even source grid is dropped.
inline Eigen::ArrayXXd spectral_resample(const Eigen::ArrayXXd& f, int m1, int m2) {
  if (f.rows() == m1 && f.cols() == m2) return f;
  const int n1 = static_cast<int>(f.rows()), n2 = static_cast<int>(f.cols());
  const Eigen::ArrayXXcd hat = fft_forward(f);
  Eigen::ArrayXXcd out = Eigen::ArrayXXcd::Zero(m1, m2);
  const int c1 = (std::min(n1, m1) - 1) / 2, c2 = (std::min(n2, m2) - 1) / 2;
  for (int n = -c2; n <= c2; ++n)
    for (int m = -c1; m <= c1; ++m) out(slot_index(m, m1), slot_index(n, m2)) = hat(slot_index(m, n1), slot_index(n, n2));
  return fft_backward(out).real();
}

// 81-component tensor chi3_{abcd} per grid point, flat index a*27 + b*9 + c*3 + d.
class SusceptibilityField {
 public:
  SusceptibilityField() = default;
  SusceptibilityField(Lattice lat, int n1, int n2) : lattice_(std::move(lat)), n1_(n1), n2_(n2) {
    for (auto& t : chi_) t = Eigen::ArrayXXd::Zero(n1, n2);
  }

  static int flat(int a, int b, int c, int d) { return a * 27 + b * 9 + c * 3 + d; }

  // chi3 = chi0(x) (d_ab d_cd + d_ac d_bd + d_ad d_bc) / 3
  static SusceptibilityField isotropic(const Lattice& lat, const Eigen::ArrayXXd& chi0) {
    SusceptibilityField s(lat, static_cast<int>(chi0.rows()), static_cast<int>(chi0.cols()));
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        for (int c = 0; c < 3; ++c)
          for (int d = 0; d < 3; ++d) {
            const double w = ((a == b && c == d) + (a == c && b == d) + (a == d && b == c)) / 3.0;
            if (w != 0.0) s.chi_[flat(a, b, c, d)] = w * chi0;
          }
    s.isotropic_profile_ = chi0;
    return s;
  }

  static SusceptibilityField from_components(const Lattice& lat, std::array<Eigen::ArrayXXd, 81> chi) {
    SusceptibilityField s(lat, static_cast<int>(chi[0].rows()), static_cast<int>(chi[0].cols()));
    s.chi_ = std::move(chi);
    return s;
  }

  const Lattice& lattice() const { return lattice_; }
  int n1() const { return n1_; }
  int n2() const { return n2_; }
  const Eigen::ArrayXXd& component(int a, int b, int c, int d) const { return chi_[flat(a, b, c, d)]; }

  // chi_sym_{abcd} = chi_{cbad} + chi_{acbd} + chi_{abcd}
  Eigen::ArrayXXd symmetrized(int a, int b, int c, int d) const {
    return chi_[flat(c, b, a, d)] + chi_[flat(a, c, b, d)] + chi_[flat(a, b, c, d)];
  }

  // Isotropic profile chi0 if the tensor was built by isotropic(); the
  // symmetrized tensor is then chi0 (d_ab d_cd + d_ac d_bd + d_ad d_bc).
  const std::optional<Eigen::ArrayXXd>& isotropic_profile() const { return isotropic_profile_; }

 private:
  Lattice lattice_;
  int n1_ = 0, n2_ = 0;
  std::array<Eigen::ArrayXXd, 81> chi_;
  std::optional<Eigen::ArrayXXd> isotropic_profile_;
};

struct AssumptionReport {
  bool positivity = false;
  bool evenness_eps = false;
  bool evenness_chi = false;
  bool realness = false;
  double min_eps = 0.0;
  double eps_even_defect = 0.0;
  double chi_even_defect = 0.0;
};

inline double evenness_defect(const Eigen::ArrayXXd& f) {
  const double m = f.abs().maxCoeff();
  if (m == 0.0) return 0.0;
  return (f - reflect(f)).abs().maxCoeff() / m;
}

inline AssumptionReport check_assumptions(const PeriodicScalarField& eps, const SusceptibilityField& chi) {
  AssumptionReport r;
  r.min_eps = eps.samples.minCoeff();
  r.positivity = r.min_eps > 0.0;
  r.eps_even_defect = evenness_defect(eps.samples);
  r.evenness_eps = r.eps_even_defect < 1e-10;
  r.realness = eps.samples.allFinite();
  double chi_defect = 0.0;
  double chi_max = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c)
        for (int d = 0; d < 3; ++d) {
          const auto& t = chi.component(a, b, c, d);
          r.realness = r.realness && t.allFinite();
          chi_max = std::max(chi_max, t.abs().maxCoeff());
          chi_defect = std::max(chi_defect, (t - reflect(t)).abs().maxCoeff());
        }
  r.chi_even_defect = chi_max > 0 ? chi_defect / chi_max : 0.0;
  r.evenness_chi = r.chi_even_defect < 1e-10;
  return r;
}

// C^2 step: 0 for s <= -w/2, 1 for s >= w/2, quintic in between.
inline double smooth_step(double s, double w) {
  if (w <= 0.0) return s > 0.0 ? 1.0 : (s < 0.0 ? 0.0 : 0.5);
  const double t = s / w + 0.5;
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

struct HarmonicTerm {
  int m = 0, n = 0;   // K = m b1 + n b2
  double cos_amp = 0.0;
  double sin_amp = 0.0;
};

// Material description: eps(x) and the isotropic Kerr profile chi0(x), either
// as closed-form functions or as tabulated cell samples.
class Medium {
 public:
  using Profile = std::function<double(const Vec2&)>;

  Medium(Lattice lat, Profile eps, Profile chi0, std::string kind)
      : lattice_(std::move(lat)), eps_(std::move(eps)), chi0_(std::move(chi0)), kind_(std::move(kind)) {}

  static Medium homogeneous(const Lattice& lat, double eps, double chi0 = 1.0) {
    return Medium(lat, [eps](const Vec2&) { return eps; }, [chi0](const Vec2&) { return chi0; }, "homogeneous");
  }

  // eps(x) = eps0 + sum_i (c_i cos(K_i.x) + s_i sin(K_i.x))
  static Medium harmonic(const Lattice& lat, double eps0, std::vector<HarmonicTerm> terms, double chi0 = 1.0) {
    auto eps = [lat, eps0, terms](const Vec2& x) {
      double v = eps0;
      for (const auto& t : terms) {
        const double phase = lat.reciprocal(t.m, t.n).dot(x);
        v += t.cos_amp * std::cos(phase) + t.sin_amp * std::sin(phase);
      }
      return v;
    };
    return Medium(lat, eps, [chi0](const Vec2&) { return chi0; }, "harmonic");
  }

  // Distance from x to the nearest lattice point.
  static double lattice_distance(const Lattice& lat, const Vec2& x) {
    const Vec2 f = lat.to_fractional(x);
    const Vec2 base(f.x() - std::round(f.x()), f.y() - std::round(f.y()));
    double best = INFINITY;
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj) best = std::min(best, ((base.x() + di) * lat.a1() + (base.y() + dj) * lat.a2()).norm());
    return best;
  }

  // Disk of radius r centered on the lattice points; chi0 follows the same
  // indicator scaled by chi_in/chi_out.
  static Medium disk(const Lattice& lat, double radius, double eps_in, double eps_out, double width, double chi_in = 1.0,
                     double chi_out = 1.0) {
    auto ind = [lat, radius, width](const Vec2& x) { return smooth_step(radius - lattice_distance(lat, x), width); };
    return Medium(
        lat, [=](const Vec2& x) { return eps_out + (eps_in - eps_out) * ind(x); },
        [=](const Vec2& x) { return chi_out + (chi_in - chi_out) * ind(x); }, "disk");
  }

  // Annulus r_in < |x| < r_out around the lattice points.
  static Medium ring(const Lattice& lat, double r_in, double r_out, double eps_ring, double eps_bg, double width,
                     double chi_ring = 1.0, double chi_bg = 1.0) {
    if (!(r_in < r_out)) throw std::invalid_argument("ring: need r_in < r_out");
    auto ind = [lat, r_in, r_out, width](const Vec2& x) {
      const double r = lattice_distance(lat, x);
      return smooth_step(r - r_in, width) * smooth_step(r_out - r, width);
    };
    return Medium(
        lat, [=](const Vec2& x) { return eps_bg + (eps_ring - eps_bg) * ind(x); },
        [=](const Vec2& x) { return chi_bg + (chi_ring - chi_bg) * ind(x); }, "ring");
  }

  // Tabulated cell samples; other resolutions are obtained spectrally.
  static Medium sampled(const Lattice& lat, Eigen::ArrayXXd eps, Eigen::ArrayXXd chi0) {
    Medium m(lat, nullptr, nullptr, "sampled");
    m.eps_samples_ = std::move(eps);
    m.chi_samples_ = std::move(chi0);
    return m;
  }

  const Lattice& lattice() const { return lattice_; }
  const std::string& kind() const { return kind_; }

  PeriodicScalarField eps_field(int n1, int n2) const { return {lattice_, sample(eps_, eps_samples_, n1, n2)}; }
  PeriodicScalarField chi0_field(int n1, int n2) const { return {lattice_, sample(chi0_, chi_samples_, n1, n2)}; }
  SusceptibilityField chi_field(int n1, int n2) const {
    return SusceptibilityField::isotropic(lattice_, chi0_field(n1, n2).samples);
  }

 private:
  Eigen::ArrayXXd sample(const Profile& fn, const std::optional<Eigen::ArrayXXd>& tab, int n1, int n2) const {
    if (n1 < 1 || n2 < 1) throw std::invalid_argument("Medium: grid must be nonempty");
    if (tab) return spectral_resample(*tab, n1, n2);
    Eigen::ArrayXXd a(n1, n2);
    for (int j = 0; j < n2; ++j)
      for (int i = 0; i < n1; ++i) a(i, j) = fn(lattice_.grid_point(i, j, n1, n2));
    return a;
  }

  Lattice lattice_;
  Profile eps_, chi0_;
  std::optional<Eigen::ArrayXXd> eps_samples_, chi_samples_;
  std::string kind_;
};

}  // namespace gapsol
