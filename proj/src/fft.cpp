#include "fft.hpp"

#include <algorithm>
#include <mutex>
#include <new>

namespace recurdet::detail {
namespace {

// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

RealBuffer alloc_real(std::size_t n) {
  auto* p = fftw_alloc_real(n);
  if (p == nullptr) throw std::bad_alloc();
  return RealBuffer(p);
}

ComplexBuffer alloc_complex(std::size_t n) {
  auto* p = fftw_alloc_complex(n);
  if (p == nullptr) throw std::bad_alloc();
  return ComplexBuffer(p);
}

int good_fft_size(int n) {
  for (int m = std::max(n, 1);; ++m) {
    int r = m;
    for (int f : {2, 3, 5, 7}) {
      while (r % f == 0) r /= f;
    }
    if (r == 1) return m;
  }
}

RealFft2d::RealFft2d(int nx, int ny) : nx_(nx), ny_(ny) {
  auto in = alloc_real(real_size());
  auto out = alloc_complex(complex_size());
  std::lock_guard lock(planner_mutex());
  forward_ = fftw_plan_dft_r2c_2d(ny_, nx_, in.get(), out.get(), FFTW_ESTIMATE);
  inverse_ = fftw_plan_dft_c2r_2d(ny_, nx_, out.get(), in.get(), FFTW_ESTIMATE);
}

RealFft2d::~RealFft2d() {
  std::lock_guard lock(planner_mutex());
  if (forward_ != nullptr) fftw_destroy_plan(forward_);
  if (inverse_ != nullptr) fftw_destroy_plan(inverse_);
}

void RealFft2d::forward(double* in, fftw_complex* out) const {
  fftw_execute_dft_r2c(forward_, in, out);
}

void RealFft2d::inverse(fftw_complex* in, double* out) const {
  fftw_execute_dft_c2r(inverse_, in, out);
}

void multiply_conj(const fftw_complex* a, const fftw_complex* b, fftw_complex* out, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    const double re = a[k][0] * b[k][0] + a[k][1] * b[k][1];
    const double im = a[k][1] * b[k][0] - a[k][0] * b[k][1];
    out[k][0] = re;
    out[k][1] = im;
  }
}

}  // namespace recurdet::detail
