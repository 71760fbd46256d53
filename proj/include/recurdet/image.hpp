#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "recurdet/error.hpp"

namespace recurdet {

struct Point {
  int x = 0;
  int y = 0;

  friend bool operator==(const Point&, const Point&) = default;
  /// Lexicographic (row, col) order.
  friend bool operator<(const Point& a, const Point& b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  }
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}
  explicit Vec2(Point p) : x(p.x), y(p.y) {}

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  Vec2 operator-() const { return {-x, -y}; }
  double norm() const { return std::hypot(x, y); }
  double squared_norm() const { return x * x + y * y; }

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Dense row-major raster.
template <class T>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {}
  Raster(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw Error(ErrorCode::kDimensionMismatch, "raster data length does not match width*height");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& values() const { return data_; }

  bool same_shape(const auto& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Intensities in [0,1].
class GrayImage : public Raster<double> {
 public:
  using Raster::Raster;

  /// Throws if any value is non-finite or outside [0,1].
  void validate() const;
};

/// Per-pixel correlation scores in [-1,1]; the border band is -1.
class CorrelationMap : public Raster<double> {
 public:
  using Raster::Raster;
};

class BinaryMap : public Raster<std::uint8_t> {
 public:
  using Raster::Raster;

  std::size_t count() const;
  std::vector<Point> set_pixels() const;
};

/// Function of integer lag (dx, dy) with |dx| <= radius_x and |dy| <= radius_y.
class LagMap {
 public:
  LagMap() = default;
  LagMap(int radius_x, int radius_y, double fill = 0.0)
      : radius_x_(radius_x), radius_y_(radius_y),
        values_(2 * radius_x + 1, 2 * radius_y + 1, fill) {}

  int radius_x() const { return radius_x_; }
  int radius_y() const { return radius_y_; }
  bool contains(int dx, int dy) const {
    return std::abs(dx) <= radius_x_ && std::abs(dy) <= radius_y_;
  }
  double& at(int dx, int dy) { return values_(dx + radius_x_, dy + radius_y_); }
  double at(int dx, int dy) const { return values_(dx + radius_x_, dy + radius_y_); }
  const Raster<double>& raster() const { return values_; }
  Raster<double>& raster() { return values_; }

 private:
  int radius_x_ = 0;
  int radius_y_ = 0;
  Raster<double> values_;
};

/// A square window of intensities with cached mean and deviation norm.
class Patch {
 public:
  Patch() = default;
  Patch(int side, std::vector<double> data);

  /// Window of `side` centered on `center`; the window must lie inside `img`.
  static Patch cut(const GrayImage& img, Point center, int side);

  int side() const { return side_; }
  int half() const { return side_ / 2; }
  std::span<const double> data() const { return data_; }
  double at(int x, int y) const { return data_[static_cast<std::size_t>(y * side_ + x)]; }
  double mean() const { return mean_; }
  /// sqrt(sum (p - mean)^2)
  double deviation() const { return deviation_; }
  double variance() const { return deviation_ * deviation_ / static_cast<double>(data_.size()); }

  friend bool operator==(const Patch& a, const Patch& b) {
    return a.side_ == b.side_ && a.data_ == b.data_;
  }

 private:
  int side_ = 0;
  std::vector<double> data_;
  double mean_ = 0.0;
  double deviation_ = 0.0;
};

struct BoundingBox {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

}  // namespace recurdet
