#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "recurdet/detection.hpp"

using namespace recurdet;

namespace {

std::vector<Vote> planted_votes(const std::vector<Vec2>& centers, int patches, double jitter, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vote> votes;
  for (const Vec2& c : centers) {
    for (int p = 0; p < patches; ++p) {
      Vec2 d;
      do d = {u(rng), u(rng)};
      while (d.norm() > 1.0);
      const Vec2 v = c + d * jitter;
      votes.push_back({p, v, Point{static_cast<int>(std::lround(v.x)), static_cast<int>(std::lround(v.y))}, 0.97});
    }
  }
  std::shuffle(votes.begin(), votes.end(), rng);
  return votes;
}

}  // namespace

TEST_SUITE("detection") {

TEST_CASE("votes shift hits by the embedded coordinate") {
  EmbeddedModel model;
  model.component_count = 1;
  model.vertices = {{0, {-4.0, 2.0}, 0}, {2, {3.0, -1.0}, 0}};
  std::vector<RecurrentPatch> patches(3);
  for (int i = 0; i < 3; ++i) {
    patches[static_cast<std::size_t>(i)].id = i;
    patches[static_cast<std::size_t>(i)].occurrence = BinaryMap(20, 20, 0);
  }
  patches[0].occurrence(1, 5) = 1;
  patches[0].hits = {{{1, 5}, 0.99}};
  patches[1].occurrence(8, 8) = 1;  // not in the model
  patches[1].hits = {{{8, 8}, 0.98}};
  const auto votes = collect_votes(model, patches);
  REQUIRE(votes.size() == 1);
  CHECK(votes[0].patch_id == 0);
  CHECK(votes[0].center == Vec2(5.0, 3.0));
  CHECK(votes[0].hit == Point{1, 5});

  // Centers may fall outside the frame.
  patches[2].occurrence(0, 0) = 1;
  patches[2].hits = {{{0, 0}, 0.96}};
  const auto more = collect_votes(model, patches);
  REQUIRE(more.size() == 2);
  CHECK(std::any_of(more.begin(), more.end(), [](const Vote& v) { return v.center == Vec2(-3.0, 1.0); }));
}

TEST_CASE("25 planted centers") {
  std::mt19937_64 rng(1);
  std::vector<Vec2> centers;
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 5; ++i) centers.push_back({30.0 + 40 * i, 30.0 + 40 * j});
  const auto votes = planted_votes(centers, 5, 3.0, rng);
  const auto clusters = ransac_cluster(votes, {});
  REQUIRE(clusters.size() == 25);
  for (const Vec2& c : centers) {
    const auto it = std::min_element(clusters.begin(), clusters.end(), [&](const Cluster& a, const Cluster& b) {
      return (a.center - c).norm() < (b.center - c).norm();
    });
    CHECK((it->center - c).norm() <= 2.0);
    CHECK(it->members.size() == 5);
  }
}

TEST_CASE("lone vote makes no cluster") {
  CHECK(ransac_cluster({{0, {5, 5}, {5, 5}, 0.99}}, {}).empty());
  CHECK(ransac_cluster({}, {}).empty());
}

TEST_CASE("close centers with disjoint patches merge") {
  std::vector<Vote> votes;
  for (int p = 0; p < 3; ++p) votes.push_back({p, {50, 50}, {50, 50}, 0.99});
  for (int p = 3; p < 6; ++p) votes.push_back({p, {60, 50}, {60, 50}, 0.99});
  const auto clusters = ransac_cluster(votes, {});
  REQUIRE(clusters.size() == 1);
  CHECK(clusters[0].members.size() == 6);
}

TEST_CASE("duplicate patch ids keep the nearest vote") {
  std::vector<Vote> votes{{0, {10, 10}, {10, 10}, 0.99}, {1, {11, 10}, {11, 10}, 0.99}, {1, {14, 10}, {14, 10}, 0.99}};
  RansacConfig cfg;
  const auto clusters = ransac_cluster(votes, cfg);
  REQUIRE(clusters.size() == 1);
  REQUIRE(clusters[0].members.size() == 2);
  CHECK(clusters[0].members[1].hit == Point{11, 10});
}

TEST_CASE("planted recall and exclusive membership") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Vec2> centers;
    std::uniform_real_distribution<double> off(-4.0, 4.0);
    for (int j = 0; j < 6; ++j)
      for (int i = 0; i < 6; ++i) centers.push_back({40.0 + 36 * i + off(rng), 40.0 + 36 * j + off(rng)});
    std::vector<Vote> votes;
    for (const Vec2& c : centers) {
      const int n = 3 + static_cast<int>(rng() % 4);
      auto v = planted_votes({c}, n, 5.0, rng);
      votes.insert(votes.end(), v.begin(), v.end());
    }
    RansacConfig cfg;
    cfg.rng_seed = rng();
    const auto clusters = ransac_cluster(votes, cfg);
    int matched = 0;
    for (const Vec2& c : centers) {
      matched += std::any_of(clusters.begin(), clusters.end(), [&](const Cluster& k) { return (k.center - c).norm() <= 10.0; });
    }
    CHECK(matched >= 0.95 * static_cast<double>(centers.size()));

    std::multiset<std::tuple<int, int, int>> used;
    for (const auto& k : clusters) {
      std::set<int> ids;
      for (const auto& m : k.members) {
        CHECK((m.vote - k.center).norm() <= 10.0 + 1e-9);
        CHECK(ids.insert(m.patch_id).second);
        used.insert({m.patch_id, m.hit.x, m.hit.y});
      }
    }
    std::multiset<std::tuple<int, int, int>> all;
    for (const auto& v : votes) all.insert({v.patch_id, v.hit.x, v.hit.y});
    for (const auto& key : used) CHECK(used.count(key) <= all.count(key));
  }
}

TEST_CASE("clustering is deterministic and translation equivariant") {
  std::mt19937_64 rng(11);
  std::vector<Vec2> centers;
  for (int i = 0; i < 20; ++i) centers.push_back({25.0 + 30 * (i % 5), 25.0 + 30 * (i / 5)});
  const auto votes = planted_votes(centers, 4, 3.0, rng);
  RansacConfig cfg;
  cfg.rng_seed = 99;
  const auto a = ransac_cluster(votes, cfg);
  const auto b = ransac_cluster(votes, cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].center == b[k].center);

  std::vector<Vote> moved = votes;
  for (auto& v : moved) {
    v.center += Vec2(64, -32);
    v.hit = {v.hit.x + 64, v.hit.y - 32};
  }
  const auto c = ransac_cluster(moved, cfg);
  REQUIRE(c.size() == a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK((c[k].center - a[k].center - Vec2(64, -32)).norm() < 1e-9);
    CHECK(c[k].members.size() == a[k].members.size());
  }
}

TEST_CASE("cluster json") {
  const auto j = clusters_to_json({{0, {1.5, 2.5}, {{3, {4, 5}, {1.5, 2.5}, 0.99}}}});
  CHECK(j[0]["cx"] == 1.5);
  CHECK(j[0]["members"][0]["patch"] == 3);
  CHECK(j[0]["members"][0]["x"] == 4);
}

}  // TEST_SUITE
