#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "recurdet/image.hpp"

namespace testing_util {

using recurdet::GrayImage;

inline GrayImage random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GrayImage img(w, h, 0.0);
  for (double& v : img.data()) v = u(rng);
  return img;
}

// Brute force: correlation of the patch with the window centered on (x, y).
inline double direct_ncc(const GrayImage& img, const recurdet::Patch& p, int x, int y) {
  const int r = p.half();
  if (x - r < 0 || y - r < 0 || x + r >= img.width() || y + r >= img.height()) return -1.0;
  double wm = 0.0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) wm += img(x + dx, y + dy);
  wm /= static_cast<double>(p.side() * p.side());
  double num = 0.0, wn = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const double a = p.at(dx + r, dy + r) - p.mean();
      const double b = img(x + dx, y + dy) - wm;
      num += a * b;
      wn += b * b;
    }
  }
  if (wn <= 0.0) return 0.0;
  return num / (p.deviation() * std::sqrt(wn));
}

// Planted blob: a disc with three off-center spots so patches localize. Nothing is drawn outside the disc.
inline void stamp_blob(GrayImage& img, double cx, double cy) {
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy > 12.0 * 12.0) continue;
      double v = 0.45;
      v += 0.5 * std::exp(-((dx + 5) * (dx + 5) + (dy + 4) * (dy + 4)) / (2 * 2.5 * 2.5));
      v -= 0.3 * std::exp(-((dx - 5) * (dx - 5) + (dy - 5) * (dy - 5)) / (2 * 2.2 * 2.2));
      v += 0.4 * std::exp(-((dx + 1) * (dx + 1) / (2 * 4.0 * 4.0) + (dy - 6.5) * (dy - 6.5) / (2 * 2.0 * 2.0)));
      img(x, y) = std::clamp(v, 0.0, 1.0);
    }
  }
}

inline GrayImage blob_grid(int n, int spacing, int margin, std::vector<recurdet::Point>* centers = nullptr) {
  const int side = 2 * margin + (n - 1) * spacing + 1;
  GrayImage img(side, side, 0.1);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int cx = margin + i * spacing, cy = margin + j * spacing;
      stamp_blob(img, cx, cy);
      if (centers) centers->push_back({cx, cy});
    }
  }
  return img;
}

}  // namespace testing_util
