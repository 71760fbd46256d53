#include "recurdet/detection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace recurdet {

std::vector<Vote> collect_votes(const EmbeddedModel& model, const std::vector<RecurrentPatch>& patches) {
  std::vector<Vote> votes;
  for (const auto& p : patches) {
    const ModelVertex* v = model.find(p.id);
    if (v == nullptr) continue;
    for (const auto& h : p.hits) votes.push_back({p.id, Vec2(h.at) - v->coord, h.at, h.score});
  }
  return votes;
}

namespace {

// Uniform bucket grid over vote centers for radius queries.
class VoteGrid {
 public:
  VoteGrid(const std::vector<Vote>& votes, double cell) : cell_(cell) {
    min_x_ = min_y_ = 0.0;
    if (!votes.empty()) {
      min_x_ = max_x_ = votes[0].center.x;
      min_y_ = max_y_ = votes[0].center.y;
    }
    for (const auto& v : votes) {
      min_x_ = std::min(min_x_, v.center.x);
      min_y_ = std::min(min_y_, v.center.y);
      max_x_ = std::max(max_x_, v.center.x);
      max_y_ = std::max(max_y_, v.center.y);
    }
    nx_ = static_cast<int>((max_x_ - min_x_) / cell_) + 1;
    ny_ = static_cast<int>((max_y_ - min_y_) / cell_) + 1;
    buckets_.resize(static_cast<std::size_t>(nx_) * ny_);
    for (std::size_t k = 0; k < votes.size(); ++k) buckets_[bucket(votes[k].center)].push_back(k);
  }

  template <class F>
  void for_each_near(Vec2 c, F&& f) const {
    const int cx = static_cast<int>(std::floor((c.x - min_x_) / cell_));
    const int cy = static_cast<int>(std::floor((c.y - min_y_) / cell_));
    for (int y = std::max(0, cy - 1); y <= std::min(ny_ - 1, cy + 1); ++y) {
      for (int x = std::max(0, cx - 1); x <= std::min(nx_ - 1, cx + 1); ++x) {
        for (std::size_t k : buckets_[static_cast<std::size_t>(y) * nx_ + x]) f(k);
      }
    }
  }

 private:
  std::size_t bucket(Vec2 c) const {
    const int x = std::clamp(static_cast<int>((c.x - min_x_) / cell_), 0, nx_ - 1);
    const int y = std::clamp(static_cast<int>((c.y - min_y_) / cell_), 0, ny_ - 1);
    return static_cast<std::size_t>(y) * nx_ + x;
  }

  double cell_;
  double min_x_, min_y_, max_x_ = 0.0, max_y_ = 0.0;
  int nx_ = 1;
  int ny_ = 1;
  std::vector<std::vector<std::size_t>> buckets_;
};

struct Consensus {
  std::vector<std::size_t> inliers;  // sorted by patch id
  double spread = 0.0;               // sum of squared distances

  bool better_than(const Consensus& o) const {
    if (inliers.size() != o.inliers.size()) return inliers.size() > o.inliers.size();
    return spread < o.spread;
  }
};

Consensus consensus_at(Vec2 c, const std::vector<Vote>& votes, const std::vector<char>& active, const VoteGrid& grid,
                       double radius) {
  // nearest active vote per patch id within radius; ties go to the lower index
  std::map<int, std::pair<double, std::size_t>> nearest;
  const double r2 = radius * radius;
  grid.for_each_near(c, [&](std::size_t k) {
    if (!active[k]) return;
    const double d2 = (votes[k].center - c).squared_norm();
    if (d2 > r2) return;
    auto [it, inserted] = nearest.try_emplace(votes[k].patch_id, d2, k);
    if (!inserted && (d2 < it->second.first || (d2 == it->second.first && k < it->second.second))) it->second = {d2, k};
  });
  Consensus out;
  for (const auto& [id, dk] : nearest) {
    out.inliers.push_back(dk.second);
    out.spread += dk.first;
  }
  return out;
}

Vec2 mean_center(const Consensus& c, const std::vector<Vote>& votes) {
  Vec2 sum;
  for (std::size_t k : c.inliers) sum += votes[k].center;
  return sum / static_cast<double>(c.inliers.size());
}

}  // namespace

std::vector<Cluster> ransac_cluster(const std::vector<Vote>& votes, const RansacConfig& cfg) {
  std::vector<Cluster> clusters;
  if (votes.empty()) return clusters;
  const double radius = cfg.sigma / 2.0;
  // Radius queries scan the 3x3 block around a cell, so the cell must cover the radius.
  const VoteGrid grid(votes, std::max(radius, 1.0));
  std::vector<char> active(votes.size(), 1);
  std::size_t remaining = votes.size();
  std::mt19937_64 rng(cfg.rng_seed);

  while (remaining >= static_cast<std::size_t>(std::max(cfg.min_support, 1))) {
    std::vector<std::size_t> hypotheses;
    for (std::size_t k = 0; k < votes.size(); ++k) {
      if (active[k]) hypotheses.push_back(k);
    }
    if (hypotheses.size() > cfg.exhaustive_limit) {
      std::vector<std::size_t> sampled;
      std::uniform_int_distribution<std::size_t> pick(0, hypotheses.size() - 1);
      for (std::size_t s = 0; s < cfg.exhaustive_limit; ++s) sampled.push_back(hypotheses[pick(rng)]);
      hypotheses = std::move(sampled);
    }

    Consensus best;
    Vec2 best_center;
    bool found = false;
    for (std::size_t k : hypotheses) {
      Consensus c = consensus_at(votes[k].center, votes, active, grid, radius);
      if (!found || c.better_than(best)) {
        best = std::move(c);
        best_center = votes[k].center;
        found = true;
      }
    }

    for (int it = 0; it < cfg.refine_iterations && !best.inliers.empty(); ++it) {
      const Vec2 c = mean_center(best, votes);
      Consensus refined = consensus_at(c, votes, active, grid, radius);
      if (refined.inliers.size() < best.inliers.size()) break;
      best = std::move(refined);
      best_center = c;
    }

    if (static_cast<int>(best.inliers.size()) < cfg.min_support) break;

    Cluster cluster;
    cluster.id = static_cast<int>(clusters.size());
    cluster.center = best_center;
    for (std::size_t k : best.inliers) {
      cluster.members.push_back({votes[k].patch_id, votes[k].hit, votes[k].center, votes[k].score});
      active[k] = 0;
      --remaining;
    }
    clusters.push_back(std::move(cluster));
  }
  return clusters;
}

nlohmann::json clusters_to_json(const std::vector<Cluster>& clusters) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : clusters) {
    nlohmann::json members = nlohmann::json::array();
    for (const auto& m : c.members) members.push_back({{"patch", m.patch_id}, {"x", m.hit.x}, {"y", m.hit.y}});
    out.push_back({{"id", c.id}, {"cx", c.center.x}, {"cy", c.center.y}, {"members", std::move(members)}});
  }
  return out;
}

}  // namespace recurdet
