#pragma once

#include <json.hpp>

#include <cstdint>
#include <vector>

#include "recurdet/patch_mining.hpp"
#include "recurdet/structure.hpp"

namespace recurdet {

/// A patch hit shifted by the patch's embedded coordinate to the object center it implies.
struct Vote {
  int patch_id = 0;
  Vec2 center;
  Point hit;
  double score = 0.0;  // patch correlation at the hit
};

struct ClusterMember {
  int patch_id = 0;
  Point hit;
  Vec2 vote;
  double score = 0.0;
};

struct Cluster {
  int id = 0;
  Vec2 center;
  std::vector<ClusterMember> members;  // at most one per patch id, sorted by patch id
};

struct RansacConfig {
  double sigma = 20.0;  // diameter of the inlier disc
  int min_support = 2;
  int refine_iterations = 2;
  std::size_t exhaustive_limit = 5000;
  std::uint64_t rng_seed = 0;
};

/// One vote per hit of every patch that survives in the model.
std::vector<Vote> collect_votes(const EmbeddedModel& model, const std::vector<RecurrentPatch>& patches);

/// Greedy sequential RANSAC over vote centers; a vote is an inlier within sigma / 2 of the center.
std::vector<Cluster> ransac_cluster(const std::vector<Vote>& votes, const RansacConfig& cfg);

nlohmann::json clusters_to_json(const std::vector<Cluster>& clusters);

}  // namespace recurdet
