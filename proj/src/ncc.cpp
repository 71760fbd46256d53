#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fft.hpp"
#include "recurdet/correlation.hpp"

namespace recurdet {
namespace {

// Windows with a deviation norm below this are treated as flat.
constexpr double kFlatWindow = 1e-9;

void check_patch(const GrayImage& img, const Patch& patch) {
  if (patch.side() % 2 == 0) throw Error(ErrorCode::kInvalidConfig, "patch side must be odd");
  if (!(patch.deviation() > 0.0)) {
    throw Error(ErrorCode::kZeroVariancePatch, "patch has zero variance");
  }
  if (img.width() < patch.side() || img.height() < patch.side()) {
    throw Error(ErrorCode::kImageTooSmall, "image smaller than the patch");
  }
}

double clamp_score(double v) { return std::clamp(v, -1.0, 1.0); }

CorrelationMap ncc_direct(const GrayImage& img, const Patch& patch) {
  check_patch(img, patch);
  const int side = patch.side();
  const int h = patch.half();
  const double n = static_cast<double>(side) * side;
  CorrelationMap out(img.width(), img.height(), -1.0);
  for (int cy = h; cy + h < img.height(); ++cy) {
    for (int cx = h; cx + h < img.width(); ++cx) {
      double sum = 0.0;
      for (int v = -h; v <= h; ++v) {
        for (int u = -h; u <= h; ++u) sum += img(cx + u, cy + v);
      }
      const double mean = sum / n;
      double dot = 0.0;
      double ss = 0.0;
      for (int v = 0; v < side; ++v) {
        for (int u = 0; u < side; ++u) {
          const double w = img(cx + u - h, cy + v - h) - mean;
          dot += (patch.at(u, v) - patch.mean()) * w;
          ss += w * w;
        }
      }
      const double dev = std::sqrt(ss);
      out(cx, cy) = dev < kFlatWindow ? 0.0 : clamp_score(dot / (patch.deviation() * dev));
    }
  }
  return out;
}

}  // namespace

struct NccEngine::Impl {
  Impl(const GrayImage& img, int side)
      : fft(detail::good_fft_size(img.width()), detail::good_fft_size(img.height())),
        spectrum(detail::alloc_complex(fft.complex_size())),
        sum(img.width() + 1, img.height() + 1, 0.0),
        sum_sq(img.width() + 1, img.height() + 1, 0.0),
        steps_x(img.width() + 1, img.height() + 1, 0),
        steps_y(img.width() + 1, img.height() + 1, 0),
        side(side) {
    auto buf = detail::alloc_real(fft.real_size());
    std::fill_n(buf.get(), fft.real_size(), 0.0);
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) buf[static_cast<std::size_t>(y) * fft.nx() + x] = img(x, y);
    }
    fft.forward(buf.get(), spectrum.get());

    for (int y = 0; y < img.height(); ++y) {
      double row = 0.0;
      double row_sq = 0.0;
      for (int x = 0; x < img.width(); ++x) {
        row += img(x, y);
        row_sq += img(x, y) * img(x, y);
        sum(x + 1, y + 1) = sum(x + 1, y) + row;
        sum_sq(x + 1, y + 1) = sum_sq(x + 1, y) + row_sq;
      }
    }
    // Integer counts of intensity changes make the flat-window test exact,
    // unlike the floating-point window sums.
    for (int y = 0; y < img.height(); ++y) {
      int row_x = 0;
      int row_y = 0;
      for (int x = 0; x < img.width(); ++x) {
        row_x += x > 0 && img(x, y) != img(x - 1, y);
        row_y += y > 0 && img(x, y) != img(x, y - 1);
        steps_x(x + 1, y + 1) = steps_x(x + 1, y) + row_x;
        steps_y(x + 1, y + 1) = steps_y(x + 1, y) + row_y;
      }
    }
  }

  // Sum over the side x side window whose top-left corner is (x, y).
  static double box(const Raster<double>& s, int x, int y, int side) {
    return s(x + side, y + side) - s(x, y + side) - s(x + side, y) + s(x, y);
  }

  static int box(const Raster<int>& s, int x0, int y0, int x1, int y1) {
    return s(x1, y1) - s(x0, y1) - s(x1, y0) + s(x0, y0);
  }

  bool flat(int tx, int ty) const {
    return box(steps_x, tx + 1, ty, tx + side, ty + side) == 0 && box(steps_y, tx, ty + 1, tx + side, ty + side) == 0;
  }

  double window_ss(int tx, int ty) const {
    const double n = static_cast<double>(side) * side;
    const double s1 = box(sum, tx, ty, side);
    const double s2 = box(sum_sq, tx, ty, side);
    return std::max(s2 - s1 * s1 / n, 0.0);
  }

  detail::RealFft2d fft;
  detail::ComplexBuffer spectrum;
  Raster<double> sum;
  Raster<double> sum_sq;
  Raster<int> steps_x;
  Raster<int> steps_y;
  int side;
};

NccEngine::NccEngine(const GrayImage& img, int side)
    : impl_(std::make_unique<Impl>(img, side)), side_(side), width_(img.width()), height_(img.height()) {
  if (side % 2 == 0) throw Error(ErrorCode::kInvalidConfig, "patch side must be odd");
  if (img.width() < side || img.height() < side) {
    throw Error(ErrorCode::kImageTooSmall, "image smaller than the patch");
  }
}

NccEngine::~NccEngine() = default;
NccEngine::NccEngine(NccEngine&&) noexcept = default;
NccEngine& NccEngine::operator=(NccEngine&&) noexcept = default;

double NccEngine::window_variance(Point center) const {
  const int h = side_ / 2;
  if (impl_->flat(center.x - h, center.y - h)) return 0.0;
  return impl_->window_ss(center.x - h, center.y - h) / (static_cast<double>(side_) * side_);
}

CorrelationMap NccEngine::correlate(const Patch& patch) const {
  if (patch.side() != side_) throw Error(ErrorCode::kDimensionMismatch, "patch side differs from engine side");
  if (!(patch.deviation() > 0.0)) throw Error(ErrorCode::kZeroVariancePatch, "patch has zero variance");

  const auto& fft = impl_->fft;
  auto kernel = detail::alloc_real(fft.real_size());
  std::fill_n(kernel.get(), fft.real_size(), 0.0);
  for (int v = 0; v < side_; ++v) {
    for (int u = 0; u < side_; ++u) {
      kernel[static_cast<std::size_t>(v) * fft.nx() + u] = patch.at(u, v) - patch.mean();
    }
  }
  auto kspec = detail::alloc_complex(fft.complex_size());
  fft.forward(kernel.get(), kspec.get());
  detail::multiply_conj(impl_->spectrum.get(), kspec.get(), kspec.get(), fft.complex_size());
  fft.inverse(kspec.get(), kernel.get());

  const double scale = 1.0 / static_cast<double>(fft.real_size());
  const int h = side_ / 2;
  CorrelationMap out(width_, height_, -1.0);
  for (int ty = 0; ty + side_ <= height_; ++ty) {
    for (int tx = 0; tx + side_ <= width_; ++tx) {
      if (impl_->flat(tx, ty)) {
        out(tx + h, ty + h) = 0.0;
        continue;
      }
      const double dev = std::sqrt(impl_->window_ss(tx, ty));
      const double dot = kernel[static_cast<std::size_t>(ty) * fft.nx() + tx] * scale;
      out(tx + h, ty + h) = dev < kFlatWindow ? 0.0 : clamp_score(dot / (patch.deviation() * dev));
    }
  }
  return out;
}

CorrelationMap ncc_map(const GrayImage& img, const Patch& patch, NccMethod method) {
  if (method == NccMethod::kDirect) return ncc_direct(img, patch);
  check_patch(img, patch);
  return NccEngine(img, patch.side()).correlate(patch);
}

LagMap auto_correlation(const Raster<double>& map, int max_lag) {
  const int w = map.width();
  const int h = map.height();
  if (map.empty()) throw Error(ErrorCode::kConstantMap, "empty map");
  const int lx = max_lag < 0 ? w - 1 : std::min(max_lag, w - 1);
  const int ly = max_lag < 0 ? h - 1 : std::min(max_lag, h - 1);

  double mean = 0.0;
  for (double v : map.data()) mean += v;
  mean /= static_cast<double>(map.size());
  double energy = 0.0;
  for (double v : map.data()) energy += (v - mean) * (v - mean);
  if (!(energy > 1e-18 * static_cast<double>(map.size()))) {
    throw Error(ErrorCode::kConstantMap, "auto-correlation of a constant map");
  }

  detail::RealFft2d fft(detail::good_fft_size(w + lx), detail::good_fft_size(h + ly));
  auto buf = detail::alloc_real(fft.real_size());
  std::fill_n(buf.get(), fft.real_size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) buf[static_cast<std::size_t>(y) * fft.nx() + x] = map(x, y) - mean;
  }
  auto spec = detail::alloc_complex(fft.complex_size());
  fft.forward(buf.get(), spec.get());
  for (std::size_t k = 0; k < fft.complex_size(); ++k) {
    spec[k][0] = spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];
    spec[k][1] = 0.0;
  }
  fft.inverse(spec.get(), buf.get());

  const double scale = 1.0 / (static_cast<double>(fft.real_size()) * energy);
  LagMap out(lx, ly);
  for (int dy = -ly; dy <= ly; ++dy) {
    for (int dx = -lx; dx <= lx; ++dx) {
      const int ix = dx < 0 ? fft.nx() + dx : dx;
      const int iy = dy < 0 ? fft.ny() + dy : dy;
      out.at(dx, dy) = buf[static_cast<std::size_t>(iy) * fft.nx() + ix] * scale;
    }
  }
  // Enforce the exact point symmetry the transform only satisfies to rounding.
  for (int dy = -ly; dy <= ly; ++dy) {
    for (int dx = -lx; dx <= lx; ++dx) {
      if (dy > 0 || (dy == 0 && dx > 0)) {
        const double avg = 0.5 * (out.at(dx, dy) + out.at(-dx, -dy));
        out.at(dx, dy) = avg;
        out.at(-dx, -dy) = avg;
      }
    }
  }
  out.at(0, 0) = 1.0;
  return out;
}

LagMap cross_correlate_binary(const BinaryMap& z_i, const BinaryMap& z_j, int max_lag) {
  if (!z_i.same_shape(z_j)) throw Error(ErrorCode::kDimensionMismatch, "occurrence maps differ in size");
  const int lx = max_lag < 0 ? z_i.width() - 1 : std::min(max_lag, z_i.width() - 1);
  const int ly = max_lag < 0 ? z_i.height() - 1 : std::min(max_lag, z_i.height() - 1);
  LagMap tau(std::max(lx, 0), std::max(ly, 0));
  const auto pi = z_i.set_pixels();
  const auto pj = z_j.set_pixels();
  for (const auto& p : pi) {
    for (const auto& q : pj) {
      const int dx = q.x - p.x;
      const int dy = q.y - p.y;
      if (tau.contains(dx, dy)) tau.at(dx, dy) += 1.0;
    }
  }
  return tau;
}

BinaryMap non_max_suppress(const Raster<double>& map, double threshold, int window) {
  if (window < 3 || window % 2 == 0) throw Error(ErrorCode::kInvalidConfig, "suppression window must be odd and >= 3");
  const int r = window / 2;
  BinaryMap out(map.width(), map.height(), 0);
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      const double v = map(x, y);
      if (!(v > threshold)) continue;
      bool keep = true;
      for (int yy = std::max(0, y - r); keep && yy <= std::min(map.height() - 1, y + r); ++yy) {
        for (int xx = std::max(0, x - r); xx <= std::min(map.width() - 1, x + r); ++xx) {
          const double u = map(xx, yy);
          if (u > v || (u == v && Point{xx, yy} < Point{x, y})) {
            keep = false;
            break;
          }
        }
      }
      if (keep) out(x, y) = 1;
    }
  }
  return out;
}

LagMap gaussian_kernel(double cxx, double cxy, double cyy) {
  Eigen::Matrix2d cov;
  cov << cxx, cxy, cxy, cyy;
  // A degenerate axis still spans one pixel.
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  if (es.eigenvalues().minCoeff() < 0.25) cov += Eigen::Matrix2d::Identity() * (0.25 - std::max(es.eigenvalues().minCoeff(), 0.0));
  const double sigma_max = std::sqrt(Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(cov).eigenvalues().maxCoeff());
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_max)));
  const Eigen::Matrix2d inv = cov.inverse();
  LagMap k(radius, radius);
  double total = 0.0;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const Eigen::Vector2d d(dx, dy);
      const double v = std::exp(-0.5 * d.dot(inv * d));
      k.at(dx, dy) = v;
      total += v;
    }
  }
  for (auto& v : k.raster().data()) v /= total;
  return k;
}

Raster<double> filter_same(const Raster<double>& map, const LagMap& kernel) {
  const int w = map.width();
  const int h = map.height();
  const int rx = kernel.radius_x();
  const int ry = kernel.radius_y();
  detail::RealFft2d fft(detail::good_fft_size(w + rx), detail::good_fft_size(h + ry));
  auto a = detail::alloc_real(fft.real_size());
  auto b = detail::alloc_real(fft.real_size());
  std::fill_n(a.get(), fft.real_size(), 0.0);
  std::fill_n(b.get(), fft.real_size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) a[static_cast<std::size_t>(y) * fft.nx() + x] = map(x, y);
  }
  for (int dy = -ry; dy <= ry; ++dy) {
    for (int dx = -rx; dx <= rx; ++dx) {
      const int ix = dx < 0 ? fft.nx() + dx : dx;
      const int iy = dy < 0 ? fft.ny() + dy : dy;
      b[static_cast<std::size_t>(iy) * fft.nx() + ix] = kernel.at(dx, dy);
    }
  }
  auto sa = detail::alloc_complex(fft.complex_size());
  auto sb = detail::alloc_complex(fft.complex_size());
  fft.forward(a.get(), sa.get());
  fft.forward(b.get(), sb.get());
  detail::multiply_conj(sa.get(), sb.get(), sa.get(), fft.complex_size());
  fft.inverse(sa.get(), a.get());
  const double scale = 1.0 / static_cast<double>(fft.real_size());
  Raster<double> out(w, h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out(x, y) = a[static_cast<std::size_t>(y) * fft.nx() + x] * scale;
  }
  return out;
}

}  // namespace recurdet
