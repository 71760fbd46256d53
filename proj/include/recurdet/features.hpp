#pragma once

#include <array>
#include <string>
#include <vector>

#include "recurdet/detection.hpp"
#include "recurdet/structure.hpp"

namespace recurdet {

inline constexpr int kBaseFeatureCount = 9;
inline constexpr int kFeatureCount = 2 * kBaseFeatureCount;

/// Layout of the occurrence descriptor. Indices 9..17 hold the
/// occlusion-sampled counterparts of 0..8 in the same order.
enum FeatureIndex : int {
  kPatchCount = 0,
  kMeanCorrelation = 1,
  kMeanDeformation = 2,
  kCentroidOffset = 3,
  kBorderProximity = 4,
  kAngularOccupancy = 5,
  kComposition1 = 6,
  kComposition2 = 7,
  kComposition3 = 8,
  kOcclusionBlock = 9,
};

using BaseFeatures = std::array<double, kBaseFeatureCount>;
using FeatureVector = std::array<double, kFeatureCount>;

/// Average misfit |(y_j' - y_j) - o_ij'| over member pairs joined by a graph edge; 0 if none.
double mean_deformation(const Cluster& cluster, const PatchGraph& graph);

/// Distance between the centroid of the members' hit locations and the cluster center.
double centroid_offset(const Cluster& cluster);

struct AngularOccupancy {
  int occupied = 0;
  std::vector<int> empty_bins;
};

/// Bins of equal angle starting at -pi; bin b has bisector -pi + (b + 1/2) * 2pi / bins.
int angular_bin(Vec2 direction, int bins);
double bin_bisector(int bin, int bins);
AngularOccupancy angular_occupancy(const Cluster& cluster, int bins = 8);

/// Top principal directions of the clusters' patch-membership indicator vectors.
struct CompositionBasis {
  std::vector<int> patch_ids;               // coordinate order of the indicator vectors
  std::array<std::vector<double>, 3> axes;  // unit (or zero when padded)
  std::array<double, 3> variances{};
  bool degenerate = false;                  // fewer than 3 clusters: zero axes

  std::vector<double> indicator(const Cluster& cluster) const;
  std::array<double, 3> project(const Cluster& cluster) const;
};

CompositionBasis composition_basis(const std::vector<Cluster>& clusters, const std::vector<int>& patch_ids);

/// How far the object circle around `center` is clipped by the image border, in [0, radius].
double border_proximity(Vec2 center, int width, int height, double object_radius);

/// Base features of every cluster painted over a circle of the object
/// diameter around its center. Where circles overlap the nearest center
/// wins; sampling can skip one cluster's own circle.
class FeatureMaps {
 public:
  FeatureMaps(int width, int height, std::vector<Vec2> centers, std::vector<BaseFeatures> values, double diameter);

  int width() const { return width_; }
  int height() const { return height_; }
  double sample(int feature, Point p, int exclude_cluster = -1) const;
  Raster<double> render(int feature) const;

 private:
  int width_;
  int height_;
  std::vector<BaseFeatures> values_;
  Raster<int> first_;
  Raster<int> second_;
};

/// Sum over empty bins of the feature maps sampled at distance `object_size`
/// along each bin's bisector.
BaseFeatures occlusion_features(int cluster_index, Vec2 center, const FeatureMaps& maps,
                                const std::vector<int>& empty_bins, int bins, double object_size);

struct FeatureContext {
  const PatchGraph* graph = nullptr;
  CompositionBasis basis;
  int width = 0;
  int height = 0;
  double object_size = 27.0;
  int bins = 8;
};

BaseFeatures base_features(const Cluster& cluster, const FeatureContext& ctx);

/// Raw (unnormalized) descriptors for all clusters.
std::vector<FeatureVector> build_feature_vectors(const std::vector<Cluster>& clusters, const FeatureContext& ctx);

struct FeatureScaling {
  FeatureVector mean{};
  FeatureVector stddev{};
};

/// Per-feature z-scores over all rows; constant columns become 0.
FeatureScaling zscore_normalize(std::vector<FeatureVector>& rows);

std::string features_to_csv(const std::vector<Cluster>& clusters, const std::vector<FeatureVector>& rows);

}  // namespace recurdet
