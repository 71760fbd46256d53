#include "recurdet/features.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace recurdet {

double mean_deformation(const Cluster& cluster, const PatchGraph& graph) {
  double total = 0.0;
  int pairs = 0;
  const auto& m = cluster.members;
  for (std::size_t a = 0; a < m.size(); ++a) {
    for (std::size_t b = a + 1; b < m.size(); ++b) {
      const auto o = graph.offset(m[a].patch_id, m[b].patch_id);
      if (!o) continue;
      total += (Vec2(m[b].hit) - Vec2(m[a].hit) - *o).norm();
      ++pairs;
    }
  }
  return pairs == 0 ? 0.0 : total / pairs;
}

double centroid_offset(const Cluster& cluster) {
  if (cluster.members.empty()) throw Error(ErrorCode::kEmptyCluster, "cluster has no members");
  Vec2 sum;
  for (const auto& m : cluster.members) sum += Vec2(m.hit);
  return (sum / static_cast<double>(cluster.members.size()) - cluster.center).norm();
}

int angular_bin(Vec2 d, int bins) {
  if (d.squared_norm() < 1e-18) return 0;
  const double a = std::atan2(d.y, d.x) + std::numbers::pi;  // [0, 2pi]
  const int b = static_cast<int>(std::floor(a / (2.0 * std::numbers::pi / bins)));
  return std::clamp(b, 0, bins - 1);
}

double bin_bisector(int bin, int bins) { return -std::numbers::pi + (bin + 0.5) * 2.0 * std::numbers::pi / bins; }

AngularOccupancy angular_occupancy(const Cluster& cluster, int bins) {
  if (cluster.members.empty()) throw Error(ErrorCode::kEmptyCluster, "cluster has no members");
  std::vector<char> used(static_cast<std::size_t>(bins), 0);
  for (const auto& m : cluster.members) used[static_cast<std::size_t>(angular_bin(Vec2(m.hit) - cluster.center, bins))] = 1;
  AngularOccupancy out;
  for (int b = 0; b < bins; ++b) {
    if (used[static_cast<std::size_t>(b)]) {
      ++out.occupied;
    } else {
      out.empty_bins.push_back(b);
    }
  }
  return out;
}

std::vector<double> CompositionBasis::indicator(const Cluster& cluster) const {
  std::vector<double> v(patch_ids.size(), 0.0);
  for (const auto& m : cluster.members) {
    auto it = std::lower_bound(patch_ids.begin(), patch_ids.end(), m.patch_id);
    if (it != patch_ids.end() && *it == m.patch_id) v[static_cast<std::size_t>(it - patch_ids.begin())] = 1.0;
  }
  return v;
}

std::array<double, 3> CompositionBasis::project(const Cluster& cluster) const {
  const auto v = indicator(cluster);
  std::array<double, 3> out{};
  for (int a = 0; a < 3; ++a) {
    const auto& axis = axes[static_cast<std::size_t>(a)];
    for (std::size_t i = 0; i < v.size() && i < axis.size(); ++i) out[static_cast<std::size_t>(a)] += v[i] * axis[i];
  }
  return out;
}

CompositionBasis composition_basis(const std::vector<Cluster>& clusters, const std::vector<int>& patch_ids) {
  CompositionBasis basis;
  basis.patch_ids = patch_ids;
  std::sort(basis.patch_ids.begin(), basis.patch_ids.end());
  const auto n = static_cast<Eigen::Index>(basis.patch_ids.size());
  for (auto& a : basis.axes) a.assign(basis.patch_ids.size(), 0.0);
  if (clusters.size() < 3 || n == 0) {
    basis.degenerate = true;
    return basis;
  }

  Eigen::MatrixXd v(static_cast<Eigen::Index>(clusters.size()), n);
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    const auto row = basis.indicator(clusters[k]);
    for (Eigen::Index i = 0; i < n; ++i) v(static_cast<Eigen::Index>(k), i) = row[static_cast<std::size_t>(i)];
  }
  const Eigen::RowVectorXd mean = v.colwise().mean();
  v.rowwise() -= mean;
  const Eigen::MatrixXd cov = v.transpose() * v / static_cast<double>(clusters.size());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  for (int a = 0; a < 3 && a < n; ++a) {
    const Eigen::Index col = n - 1 - a;  // eigenvalues ascend
    Eigen::VectorXd axis = es.eigenvectors().col(col);
    // Sign convention: the largest-magnitude component is positive.
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0) axis = -axis;
    for (Eigen::Index i = 0; i < n; ++i) basis.axes[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)] = axis(i);
    basis.variances[static_cast<std::size_t>(a)] = std::max(es.eigenvalues()(col), 0.0);
  }
  return basis;
}

double border_proximity(Vec2 c, int width, int height, double object_radius) {
  const double d = std::min({c.x, c.y, (width - 1) - c.x, (height - 1) - c.y});
  return std::clamp(object_radius - d, 0.0, object_radius);
}

FeatureMaps::FeatureMaps(int width, int height, std::vector<Vec2> centers, std::vector<BaseFeatures> values, double diameter)
    : width_(width), height_(height), values_(std::move(values)), first_(width, height, -1), second_(width, height, -1) {
  const double r = diameter / 2.0;
  Raster<double> d1(width, height, 0.0);
  Raster<double> d2(width, height, 0.0);
  for (std::size_t k = 0; k < centers.size(); ++k) {
    const Vec2 c = centers[k];
    const int id = static_cast<int>(k);
    for (int y = std::max(0, static_cast<int>(std::floor(c.y - r))); y <= std::min(height - 1, static_cast<int>(std::ceil(c.y + r))); ++y) {
      for (int x = std::max(0, static_cast<int>(std::floor(c.x - r))); x <= std::min(width - 1, static_cast<int>(std::ceil(c.x + r))); ++x) {
        const double d = (Vec2(x, y) - c).squared_norm();
        if (d > r * r) continue;
        if (first_(x, y) < 0 || d < d1(x, y)) {
          second_(x, y) = first_(x, y);
          d2(x, y) = d1(x, y);
          first_(x, y) = id;
          d1(x, y) = d;
        } else if (second_(x, y) < 0 || d < d2(x, y)) {
          second_(x, y) = id;
          d2(x, y) = d;
        }
      }
    }
  }
}

double FeatureMaps::sample(int feature, Point p, int exclude_cluster) const {
  if (!first_.contains(p.x, p.y)) return 0.0;
  int owner = first_(p.x, p.y);
  if (owner == exclude_cluster) owner = second_(p.x, p.y);
  return owner < 0 ? 0.0 : values_[static_cast<std::size_t>(owner)][static_cast<std::size_t>(feature)];
}

Raster<double> FeatureMaps::render(int feature) const {
  Raster<double> out(width_, height_, 0.0);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) out(x, y) = sample(feature, {x, y});
  }
  return out;
}

BaseFeatures occlusion_features(int cluster_index, Vec2 center, const FeatureMaps& maps, const std::vector<int>& empty_bins,
                                int bins, double object_size) {
  BaseFeatures out{};
  for (int b : empty_bins) {
    const double theta = bin_bisector(b, bins);
    const Vec2 end = center + Vec2(std::cos(theta), std::sin(theta)) * object_size;
    const Point p{static_cast<int>(std::lround(end.x)), static_cast<int>(std::lround(end.y))};
    for (int f = 0; f < kBaseFeatureCount; ++f) out[static_cast<std::size_t>(f)] += maps.sample(f, p, cluster_index);
  }
  return out;
}

BaseFeatures base_features(const Cluster& cluster, const FeatureContext& ctx) {
  if (cluster.members.empty()) throw Error(ErrorCode::kEmptyCluster, "cluster has no members");
  BaseFeatures f{};
  f[kPatchCount] = static_cast<double>(cluster.members.size());
  double corr = 0.0;
  for (const auto& m : cluster.members) corr += m.score;
  f[kMeanCorrelation] = std::clamp(corr / static_cast<double>(cluster.members.size()), 0.0, 1.0);
  f[kMeanDeformation] = ctx.graph != nullptr ? mean_deformation(cluster, *ctx.graph) : 0.0;
  f[kCentroidOffset] = centroid_offset(cluster);
  f[kBorderProximity] = border_proximity(cluster.center, ctx.width, ctx.height, ctx.object_size / 2.0);
  f[kAngularOccupancy] = angular_occupancy(cluster, ctx.bins).occupied;
  const auto proj = ctx.basis.project(cluster);
  f[kComposition1] = proj[0];
  f[kComposition2] = proj[1];
  f[kComposition3] = proj[2];
  return f;
}

std::vector<FeatureVector> build_feature_vectors(const std::vector<Cluster>& clusters, const FeatureContext& ctx) {
  std::vector<BaseFeatures> base;
  std::vector<Vec2> centers;
  for (const auto& c : clusters) {
    base.push_back(base_features(c, ctx));
    centers.push_back(c.center);
  }
  const FeatureMaps maps(ctx.width, ctx.height, centers, base, ctx.object_size);
  std::vector<FeatureVector> rows;
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    const auto occ = angular_occupancy(clusters[k], ctx.bins);
    const auto occl = occlusion_features(static_cast<int>(k), clusters[k].center, maps, occ.empty_bins, ctx.bins, ctx.object_size);
    FeatureVector row{};
    std::copy(base[k].begin(), base[k].end(), row.begin());
    std::copy(occl.begin(), occl.end(), row.begin() + kBaseFeatureCount);
    rows.push_back(row);
  }
  return rows;
}

FeatureScaling zscore_normalize(std::vector<FeatureVector>& rows) {
  FeatureScaling s;
  if (rows.empty()) return s;
  const double n = static_cast<double>(rows.size());
  for (int f = 0; f < kFeatureCount; ++f) {
    double mean = 0.0;
    for (const auto& r : rows) mean += r[static_cast<std::size_t>(f)];
    mean /= n;
    double var = 0.0;
    for (const auto& r : rows) var += (r[static_cast<std::size_t>(f)] - mean) * (r[static_cast<std::size_t>(f)] - mean);
    const double sd = std::sqrt(var / n);
    s.mean[static_cast<std::size_t>(f)] = mean;
    s.stddev[static_cast<std::size_t>(f)] = sd;
    for (auto& r : rows) {
      r[static_cast<std::size_t>(f)] = sd > 1e-12 ? (r[static_cast<std::size_t>(f)] - mean) / sd : 0.0;
    }
  }
  return s;
}

std::string features_to_csv(const std::vector<Cluster>& clusters, const std::vector<FeatureVector>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "cluster";
  for (int f = 0; f < kFeatureCount; ++f) out << ",f" << f;
  out << '\n';
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out << (k < clusters.size() ? clusters[k].id : static_cast<int>(k));
    for (double v : rows[k]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

}  // namespace recurdet
