#pragma once

#include <json.hpp>

#include <optional>
#include <vector>

#include "recurdet/correlation.hpp"
#include "recurdet/patch_mining.hpp"

namespace recurdet {

/// Two patches that fire on the same objects; offset = position(j) - position(i).
struct PatchPairEdge {
  int i = 0;
  int j = 0;
  Vec2 offset;
  double peak_ratio = 0.0;

  friend bool operator==(const PatchPairEdge&, const PatchPairEdge&) = default;
};

class PatchGraph {
 public:
  PatchGraph() = default;
  PatchGraph(std::vector<int> vertices, std::vector<PatchPairEdge> edges);

  const std::vector<int>& vertices() const { return vertices_; }
  const std::vector<PatchPairEdge>& edges() const { return edges_; }
  bool has_vertex(int id) const;
  int degree(int id) const;
  /// Offset position(b) - position(a) if (a, b) is an edge in either orientation.
  std::optional<Vec2> offset(int a, int b) const;

 private:
  std::vector<int> vertices_;         // sorted
  std::vector<PatchPairEdge> edges_;  // i < j, sorted
};

struct ModelVertex {
  int id = 0;
  Vec2 coord;
  int component = 0;

  friend bool operator==(const ModelVertex&, const ModelVertex&) = default;
};

/// Least-squares planar coordinates, zero-mean within each connected component.
struct EmbeddedModel {
  std::vector<ModelVertex> vertices;  // sorted by id
  int component_count = 0;

  const ModelVertex* find(int id) const;
};

struct GaussianFit {
  double cxx = 0.0;
  double cxy = 0.0;
  double cyy = 0.0;
  double eccentricity = 1.0;
};

struct StructureConfig {
  double ratio_threshold = 2.0;
  double eccentricity_gate = 2.0;
  double epsilon = 1.0 / 20.0;
  int patch_side = 9;
  /// Lags searched for pair offsets; 2 x object size.
  int max_lag = 54;
};

/// Peak-ratio test on the coincidence correlation of two occurrence maps.
/// The result does not depend on argument order beyond negating the offset.
std::optional<PatchPairEdge> detect_pair(const BinaryMap& z_i, const BinaryMap& z_j,
                                         double ratio_threshold = 2.0, int max_lag = 54, int suppression = 9);

/// Second moments about zero lag of the positive lobe of R that contains the origin.
GaussianFit fit_gaussian(const LagMap& r);

struct EdgeCorrection {
  BinaryMap occurrence;
  GaussianFit fit;
  Raster<double> filtered;
};

/// Replaces an edge-like patch's occurrences by the peaks of its correlation
/// map filtered with the convolution square root of the fitted Gaussian.
EdgeCorrection correct_edge_patch(const CorrelationMap& rho, const StructureConfig& cfg);

/// Gaussian fit of the auto-correlation of a correlation map's positive part,
/// used to gate `correct_edge_patch`.
GaussianFit correlation_shape(const CorrelationMap& rho, const StructureConfig& cfg);

PatchGraph build_graph(const std::vector<RecurrentPatch>& patches, const StructureConfig& cfg);

/// Single pass: drop vertices with fewer than ceil(n/10) incident edges.
PatchGraph prune_graph(const PatchGraph& g, int n);

EmbeddedModel embed(const PatchGraph& g);

/// Sum over edges of |x_j - x_i - o_ij|^2 for the given coordinates.
double embedding_objective(const PatchGraph& g, const EmbeddedModel& m);

nlohmann::json model_to_json(const EmbeddedModel& model, const std::vector<RecurrentPatch>& patches);
/// Inverse of `model_to_json`; returns the model and the stored pixel blocks by id.
std::pair<EmbeddedModel, std::vector<std::pair<int, Patch>>> model_from_json(const nlohmann::json& doc);

}  // namespace recurdet
