#pragma once

#include <memory>
#include <optional>

#include "recurdet/image.hpp"

namespace recurdet {

enum class NccMethod { kFft, kDirect };

/// Normalized cross-correlation of `patch` against every window of `img`.
///
/// The score at x is <p - mean_p, w - mean_w> / (|p - mean_p| |w - mean_w|)
/// for the window w centered on x, so a patch scores exactly 1 against its own
/// source location. Windows that do not fit inside the image are -1; flat
/// windows (zero deviation) score 0.
CorrelationMap ncc_map(const GrayImage& img, const Patch& patch, NccMethod method = NccMethod::kFft);

/// Caches the image spectrum and window statistics so that many patches of one
/// side length can be correlated against the same image. Thread-safe for
/// concurrent `correlate` calls.
class NccEngine {
 public:
  NccEngine(const GrayImage& img, int side);
  ~NccEngine();
  NccEngine(NccEngine&&) noexcept;
  NccEngine& operator=(NccEngine&&) noexcept;

  int side() const { return side_; }
  int width() const { return width_; }
  int height() const { return height_; }

  CorrelationMap correlate(const Patch& patch) const;

  /// Population variance of the window centered on `center` (full window must fit).
  double window_variance(Point center) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int side_ = 0;
  int width_ = 0;
  int height_ = 0;
};

/// Normalized auto-correlation of the mean-subtracted map, R(0) = 1.
/// Lags are limited to `max_lag` per axis (clipped to the map extent; a
/// negative value means the full extent).
LagMap auto_correlation(const Raster<double>& map, int max_lag = -1);

/// tau(d) = #{ y : z_i(y) = 1 and z_j(y + d) = 1 } for |d| <= max_lag per axis
/// (full extent when negative).
LagMap cross_correlate_binary(const BinaryMap& z_i, const BinaryMap& z_j, int max_lag = -1);

/// Pixels whose value exceeds `threshold` and which are the maximum of the
/// window x window neighbourhood around them. Equal values are ordered by
/// (row, col): the earliest pixel wins.
BinaryMap non_max_suppress(const Raster<double>& map, double threshold, int window);

/// 2-D Gaussian kernel with the given covariance, truncated at 3 standard
/// deviations of the major axis and normalized to unit sum.
LagMap gaussian_kernel(double cxx, double cxy, double cyy);

/// Same-size correlation of `map` with a lag kernel (zero outside the map).
Raster<double> filter_same(const Raster<double>& map, const LagMap& kernel);

}  // namespace recurdet
