#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>

namespace recurdet::detail {

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

using RealBuffer = std::unique_ptr<double[], FftwFree>;
using ComplexBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

RealBuffer alloc_real(std::size_t n);
ComplexBuffer alloc_complex(std::size_t n);

/// Smallest n' >= n whose only prime factors are 2, 3, 5 and 7.
int good_fft_size(int n);

/// Real 2-D transform pair of a fixed ny x nx (rows x cols) shape. Execution
/// uses FFTW's new-array interface, so one instance may run on many buffers
/// from several threads at once.
class RealFft2d {
 public:
  RealFft2d(int nx, int ny);
  ~RealFft2d();
  RealFft2d(const RealFft2d&) = delete;
  RealFft2d& operator=(const RealFft2d&) = delete;

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  std::size_t real_size() const { return static_cast<std::size_t>(nx_) * ny_; }
  std::size_t complex_size() const { return static_cast<std::size_t>(nx_ / 2 + 1) * ny_; }

  void forward(double* in, fftw_complex* out) const;
  /// Unnormalized; overwrites `in`.
  void inverse(fftw_complex* in, double* out) const;

 private:
  int nx_;
  int ny_;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

/// out[k] = a[k] * conj(b[k])
void multiply_conj(const fftw_complex* a, const fftw_complex* b, fftw_complex* out, std::size_t n);

}  // namespace recurdet::detail
