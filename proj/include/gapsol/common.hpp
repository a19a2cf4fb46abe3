#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gapsol {

using cdouble = std::complex<double>;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec3c = Eigen::Vector3cd;
using Mat2 = Eigen::Matrix2d;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr cdouble kI{0.0, 1.0};

// Raised when an iterative method stops without meeting its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> history)
      : std::runtime_error(what), history_(std::move(history)) {}
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

// Raised when a structural hypothesis on the band edge fails (simplicity,
// definiteness, gap placement).
class AssumptionError : public std::runtime_error {
 public:
  AssumptionError(std::string assumption, const std::string& what)
      : std::runtime_error(assumption + ": " + what), assumption_(std::move(assumption)) {}
  const std::string& assumption() const noexcept { return assumption_; }

 private:
  std::string assumption_;
};

// Signed frequency of FFT slot i on an n-point grid; slot n/2 of an even grid
// maps to -n/2.
inline int signed_index(int i, int n) { return i < (n + 1) / 2 ? i : i - n; }

// FFT slot of signed frequency m.
inline int slot_index(int m, int n) {
  const int r = m % n;
  return r < 0 ? r + n : r;
}

}  // namespace gapsol
