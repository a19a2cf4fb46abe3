#pragma once

#include "gapsol/common.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

namespace gapsol {

// Cached FFTW plans for column-major n1 x n2 complex arrays (entry (i,j) at
// i + n1*j). Planning is serialized; execution on fresh arrays is thread safe.
class FftPlanCache {
 public:
  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  fftw_plan get(int n1, int n2, int sign) {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto key = std::make_tuple(n1, n2, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    auto* in = fftw_alloc_complex(static_cast<size_t>(n1) * n2);
    auto* out = fftw_alloc_complex(static_cast<size_t>(n1) * n2);
    fftw_plan plan = n2 == 1 ? fftw_plan_dft_1d(n1, in, out, sign, FFTW_ESTIMATE | FFTW_UNALIGNED)
                             : fftw_plan_dft_2d(n2, n1, in, out, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    if (plan == nullptr) throw std::runtime_error("fftw: planning failed");
    plans_.emplace(key, plan);
    return plan;
  }

  ~FftPlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  FftPlanCache() = default;
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

namespace detail {
inline void execute(const cdouble* in, cdouble* out, int n1, int n2, int sign) {
  fftw_plan plan = FftPlanCache::instance().get(n1, n2, sign);
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(const_cast<cdouble*>(in)),
                   reinterpret_cast<fftw_complex*>(out));
}
}  // namespace detail

// Normalized forward transform: c(m) = (1/(n1 n2)) sum_x f(x) e^{-2 pi i m.x/n}.
inline Eigen::ArrayXXcd fft_forward(const Eigen::ArrayXXcd& f) {
  Eigen::ArrayXXcd out(f.rows(), f.cols());
  detail::execute(f.data(), out.data(), static_cast<int>(f.rows()), static_cast<int>(f.cols()), FFTW_FORWARD);
  out /= static_cast<double>(f.size());
  return out;
}

// Synthesis: f(x) = sum_m c(m) e^{2 pi i m.x/n}.
inline Eigen::ArrayXXcd fft_backward(const Eigen::ArrayXXcd& c) {
  Eigen::ArrayXXcd out(c.rows(), c.cols());
  detail::execute(c.data(), out.data(), static_cast<int>(c.rows()), static_cast<int>(c.cols()), FFTW_BACKWARD);
  return out;
}

inline Eigen::ArrayXXcd fft_forward(const Eigen::ArrayXXd& f) { return fft_forward(Eigen::ArrayXXcd(f.cast<cdouble>())); }

}  // namespace gapsol
