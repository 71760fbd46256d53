#pragma once

#include <cstdint>
#include <vector>

#include "recurdet/correlation.hpp"
#include "recurdet/image.hpp"

namespace recurdet {

struct MiningConfig {
  double epsilon = 1.0 / 20.0;
  int patch_side = 9;
  int candidates_per_round = 30;
  double stop_fraction = 0.30;
  double variance_floor = 1e-4;
  int max_rounds = 64;
  std::uint64_t rng_seed = 0;

  /// The object is assumed to span three patch widths.
  int object_size() const { return 3 * patch_side; }
  /// Throws InvalidConfig when a field is out of range.
  void validate() const;
};

/// One hit of a patch: a set pixel of its occurrence map and the correlation there.
struct Hit {
  Point at;
  double score = 0.0;

  friend bool operator==(const Hit&, const Hit&) = default;
};

struct RecurrentPatch {
  int id = 0;
  Patch patch;
  BinaryMap occurrence;
  std::vector<Hit> hits;  // in (row, col) order, one per set pixel
  int frequency = 0;
  Point source;

  friend bool operator==(const RecurrentPatch&, const RecurrentPatch&) = default;
};

struct RescaledImage {
  GrayImage image;
  double scale = 1.0;  // canonical = original * scale
};

/// Bilinear resampling so the longer box side becomes 3 * patch_side.
RescaledImage rescale_to_canonical(const GrayImage& img, const BoundingBox& bbox, const MiningConfig& cfg);

/// Bilinear resize to an explicit size (sample centers aligned).
GrayImage resize_bilinear(const GrayImage& img, int width, int height);

/// Occurrence map: suppression over `rho` at threshold 1 - epsilon with a
/// window equal to the patch side, dropping pixels flagged in `blocked`.
BinaryMap occurrence_map(const CorrelationMap& rho, const MiningConfig& cfg, const BinaryMap* blocked = nullptr);

std::vector<Hit> hits_of(const BinaryMap& occurrence, const Raster<double>& rho);

/// Greedy extraction of recurrent patches in round order.
std::vector<RecurrentPatch> mine_recurrent_patches(const GrayImage& img, const MiningConfig& cfg);

}  // namespace recurdet
