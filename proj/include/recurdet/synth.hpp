#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "recurdet/image.hpp"

namespace recurdet {

/// An elliptical Gaussian stamp blended toward `intensity` at a fixed offset from the object center.
struct PartStamp {
  double dx = 0.0;
  double dy = 0.0;
  double sx = 1.5;
  double sy = 1.5;
  double intensity = 1.0;
};

/// A filled disc with interior parts.
struct ObjectTemplate {
  double radius = 12.5;
  double body_intensity = 0.45;
  std::vector<PartStamp> parts;
};

/// Disc with four asymmetric parts.
ObjectTemplate default_target_template();
/// Same disc, different parts.
ObjectTemplate default_distractor_template();

struct SceneSpec {
  int width = 400;
  int height = 400;
  double background = 0.1;
  ObjectTemplate target = default_target_template();
  int count = 100;
  int jitter = 0;  // max per-part displacement, px
  double noise = 0.0;
  double occlusion_rate = 0.0;
  std::optional<ObjectTemplate> distractor;
  int distractor_count = 0;
  int object_size = 27;
  double min_spacing = 0.8;  // in object sizes
  double occlusion_distance = 0.8;  // occluder to occluded center, in object sizes
  int debris_count = 0;  // half-object fragments, not counted as objects
  double debris_spacing = 0.0;  // debris center to any other center, in object sizes; 0: same as objects
  std::uint64_t rng_seed = 0;

  void validate() const;
};

enum class ObjectLabel { kTarget, kDistractor };

struct TruthObject {
  Vec2 center;
  ObjectLabel label = ObjectLabel::kTarget;
  bool occluded = false;
};

struct GroundTruth {
  int width = 0;
  int height = 0;
  int object_size = 27;
  std::vector<TruthObject> objects;
  std::vector<Vec2> debris;
  BoundingBox example_box;  // around one fully visible target

  int target_count() const;
  std::vector<Vec2> target_centers() const;
};

struct Scene {
  GrayImage image;
  GroundTruth truth;
};

/// Deterministic under the seed. Throws PlacementFailure when rejection sampling gives up.
Scene generate(const SceneSpec& spec);

nlohmann::json truth_to_json(const GroundTruth& t);
GroundTruth truth_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const SceneSpec& s);
SceneSpec spec_from_json(const nlohmann::json& j);

struct DetectionScore {
  int count_error = 0;     // detections - targets
  int false_positives = 0; // H1
  int false_negatives = 0; // H0
  double f1 = 1.0;
  int distractor_hits = 0; // detections matched to a distractor
  std::vector<bool> target_found;  // per object of the truth, false for distractors
};

/// Distance-greedy one-to-one matching of detections to truth objects within `tol`.
DetectionScore score_detections(const std::vector<Vec2>& detections, const GroundTruth& truth, double tol);

/// Writes `stem`.png and `stem`.json side by side.
void write_scene(const Scene& scene, const std::string& stem);

}  // namespace recurdet
