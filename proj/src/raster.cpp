#include <cmath>
#include <numeric>

#include "recurdet/image.hpp"

namespace recurdet {

void GrayImage::validate() const {
  for (double v : data()) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw Error(ErrorCode::kIo, "gray image values must be finite and in [0,1]");
    }
  }
}

std::size_t BinaryMap::count() const {
  std::size_t n = 0;
  for (auto v : data()) n += v != 0;
  return n;
}

std::vector<Point> BinaryMap::set_pixels() const {
  std::vector<Point> out;
  for (int y = 0; y < height(); ++y) {
    for (int x = 0; x < width(); ++x) {
      if ((*this)(x, y) != 0) out.push_back({x, y});
    }
  }
  return out;
}

Patch::Patch(int side, std::vector<double> data) : side_(side), data_(std::move(data)) {
  if (side_ <= 0 || data_.size() != static_cast<std::size_t>(side_) * static_cast<std::size_t>(side_)) {
    throw Error(ErrorCode::kDimensionMismatch, "patch data must hold side*side values");
  }
  mean_ = std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(data_.size());
  double ss = 0.0;
  for (double v : data_) ss += (v - mean_) * (v - mean_);
  deviation_ = std::sqrt(ss);
}

Patch Patch::cut(const GrayImage& img, Point center, int side) {
  if (side % 2 == 0) throw Error(ErrorCode::kInvalidConfig, "patch side must be odd");
  const int h = side / 2;
  if (center.x - h < 0 || center.y - h < 0 || center.x + h >= img.width() || center.y + h >= img.height()) {
    throw Error(ErrorCode::kImageTooSmall, "patch window does not fit inside the image");
  }
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(side) * side);
  for (int y = -h; y <= h; ++y) {
    for (int x = -h; x <= h; ++x) data.push_back(img(center.x + x, center.y + y));
  }
  return Patch(side, std::move(data));
}

}  // namespace recurdet
