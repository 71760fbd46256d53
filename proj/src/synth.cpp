#include "recurdet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "recurdet/image_io.hpp"

namespace recurdet {

ObjectTemplate default_target_template() {
  ObjectTemplate t;
  t.radius = 12.5;
  t.parts = {
      {-6.0, -4.0, 2.5, 2.5, 0.95},
      {5.0, -5.0, 2.2, 2.2, 0.12},
      {-1.0, 6.5, 4.0, 2.0, 0.90},
      {7.0, 3.0, 1.8, 3.0, 0.12},
  };
  return t;
}

ObjectTemplate default_distractor_template() {
  ObjectTemplate t;
  t.radius = 12.5;
  t.parts = {
      {-6.0, 2.0, 2.0, 3.5, 0.95},
      {1.0, -6.5, 2.2, 2.2, 0.12},
      {6.0, 5.0, 2.5, 2.5, 0.90},
      {-3.0, 6.5, 4.0, 2.0, 0.12},
  };
  return t;
}

void SceneSpec::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidConfig, "scene spec: " + m); };
  if (width < 1 || height < 1) fail("canvas must be non-empty");
  if (count < 1) fail("count must be >= 1");
  if (jitter < 0 || 2 * jitter >= 20) fail("jitter must be in [0, 10)");
  if (noise < 0.0) fail("noise must be >= 0");
  if (occlusion_rate < 0.0 || occlusion_rate > 0.5) fail("occlusion_rate must be in [0, 0.5]");
  if (distractor_count < 0 || (distractor_count > 0 && !distractor)) fail("distractor_count needs a distractor template");
  if (object_size < 3) fail("object_size must be >= 3");
  if (min_spacing < 0.8) fail("min_spacing must be >= 0.8");
  if (occlusion_distance <= 0.0 || occlusion_distance > min_spacing) fail("occlusion_distance must be in (0, min_spacing]");
  if (debris_count < 0) fail("debris_count must be >= 0");
  if (!(debris_spacing >= 0.0)) fail("debris_spacing must be >= 0");
  if (target.parts.size() < 4) fail("the target template needs at least four parts");
}

int GroundTruth::target_count() const {
  return static_cast<int>(std::count_if(objects.begin(), objects.end(), [](const TruthObject& o) { return o.label == ObjectLabel::kTarget; }));
}

std::vector<Vec2> GroundTruth::target_centers() const {
  std::vector<Vec2> out;
  for (const auto& o : objects) {
    if (o.label == ObjectLabel::kTarget) out.push_back(o.center);
  }
  return out;
}

namespace {

struct Placed {
  Point center;
  bool distractor = false;
  bool occluded = false;
  int occluder = -1;
  bool debris = false;
  double cut_angle = 0.0;
};

// Fraction of pixel (x, y) covered by the disc, by 4x4 supersampling.
double disc_coverage(int x, int y, Vec2 c, double radius) {
  constexpr int kSub = 4;
  int inside = 0;
  for (int sy = 0; sy < kSub; ++sy) {
    for (int sx = 0; sx < kSub; ++sx) {
      const double px = x - 0.5 + (sx + 0.5) / kSub;
      const double py = y - 0.5 + (sy + 0.5) / kSub;
      inside += (px - c.x) * (px - c.x) + (py - c.y) * (py - c.y) <= radius * radius;
    }
  }
  return static_cast<double>(inside) / (kSub * kSub);
}

void stamp_disc(GrayImage& img, Vec2 c, double radius, double value) {
  const int x0 = std::max(0, static_cast<int>(std::floor(c.x - radius - 1)));
  const int x1 = std::min(img.width() - 1, static_cast<int>(std::ceil(c.x + radius + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(c.y - radius - 1)));
  const int y1 = std::min(img.height() - 1, static_cast<int>(std::ceil(c.y + radius + 1)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double a = disc_coverage(x, y, c, radius);
      img(x, y) = img(x, y) * (1.0 - a) + value * a;
    }
  }
}

// Parts are clipped to the body disc so instances never bleed into each other.
void stamp_part(GrayImage& img, Vec2 c, const PartStamp& p, Vec2 body, double radius) {
  const double rx = 4.0 * p.sx;
  const double ry = 4.0 * p.sy;
  for (int y = std::max(0, static_cast<int>(std::floor(c.y - ry))); y <= std::min(img.height() - 1, static_cast<int>(std::ceil(c.y + ry))); ++y) {
    for (int x = std::max(0, static_cast<int>(std::floor(c.x - rx))); x <= std::min(img.width() - 1, static_cast<int>(std::ceil(c.x + rx))); ++x) {
      const double cover = disc_coverage(x, y, body, radius);
      if (cover == 0.0) continue;
      const double u = (x - c.x) / p.sx;
      const double v = (y - c.y) / p.sy;
      const double a = cover * std::exp(-0.5 * (u * u + v * v));
      img(x, y) = img(x, y) * (1.0 - a) + p.intensity * a;
    }
  }
}

void draw_object(GrayImage& img, Point center, const ObjectTemplate& t, int jitter, std::mt19937_64& rng) {
  const Vec2 c(center);
  stamp_disc(img, c, t.radius, t.body_intensity);
  std::uniform_int_distribution<int> shift(-jitter, jitter);
  for (const auto& p : t.parts) {
    const int jx = shift(rng);
    const int jy = shift(rng);
    stamp_part(img, c + Vec2(p.dx + jx, p.dy + jy), p, c, t.radius);
  }
}

// An object drawn only on one side of a line through its center.
void draw_fragment(GrayImage& img, Point center, const ObjectTemplate& t, int jitter, double cut_angle, std::mt19937_64& rng) {
  const GrayImage before = img;
  draw_object(img, center, t, jitter, rng);
  const double nx = std::cos(cut_angle);
  const double ny = std::sin(cut_angle);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if ((x - center.x) * nx + (y - center.y) * ny < 0.0) img(x, y) = before(x, y);
    }
  }
}

double dist(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

Scene generate(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.rng_seed);
  const double radius = std::max(spec.target.radius, spec.distractor ? spec.distractor->radius : 0.0);
  const double min_d = spec.min_spacing * spec.object_size;
  const double clear_d = std::max(min_d, 2.0 * radius + 2.0);
  const int margin = static_cast<int>(std::ceil(radius)) + 2;
  if (spec.width <= 2 * margin || spec.height <= 2 * margin) {
    throw Error(ErrorCode::kPlacementFailure, "canvas smaller than one object");
  }
  const int occluded = static_cast<int>(std::lround(spec.occlusion_rate * spec.count));
  const int free_targets = spec.count - occluded;
  if (occluded > free_targets) throw Error(ErrorCode::kPlacementFailure, "not enough occluders");

  std::vector<Placed> placed;
  std::uniform_int_distribution<int> px(margin, spec.width - 1 - margin);
  std::uniform_int_distribution<int> py(margin, spec.height - 1 - margin);
  long attempts = 0;
  constexpr long kMaxAttempts = 100000;
  auto give_up = [&] {
    if (++attempts > kMaxAttempts) throw Error(ErrorCode::kPlacementFailure, "could not place all objects");
  };

  auto clear_of_all = [&](Point c, int except) {
    for (std::size_t j = 0; j < placed.size(); ++j) {
      if (static_cast<int>(j) != except && dist(c, placed[j].center) < clear_d) return false;
    }
    return true;
  };
  auto inside = [&](Point c) {
    return c.x >= margin && c.y >= margin && c.x <= spec.width - 1 - margin && c.y <= spec.height - 1 - margin;
  };

  // Occluder/occluded pairs first, while the canvas is empty; the pair sits
  // at the minimum spacing and clears everything else.
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  const double pair_d = std::ceil(spec.occlusion_distance * spec.object_size);
  for (int k = 0; k < occluded;) {
    give_up();
    const Point host{px(rng), py(rng)};
    const double th = angle(rng);
    const Point c{static_cast<int>(std::lround(host.x + pair_d * std::cos(th))),
                  static_cast<int>(std::lround(host.y + pair_d * std::sin(th)))};
    if (!inside(c) || !clear_of_all(host, -1) || !clear_of_all(c, -1)) continue;
    placed.push_back({host, false, false, -1});
    placed.push_back({c, false, true, static_cast<int>(placed.size()) - 1});
    ++k;
  }
  // Free instances never overlap anything.
  for (int i = 0; i < free_targets - occluded + spec.distractor_count;) {
    give_up();
    const Point c{px(rng), py(rng)};
    if (!clear_of_all(c, -1)) continue;
    placed.push_back({c, i >= free_targets - occluded, false, -1});
    ++i;
  }
  std::uniform_real_distribution<double> cut(-M_PI, M_PI);
  const double debris_d = std::max(clear_d, spec.debris_spacing * spec.object_size);
  for (int i = 0; i < spec.debris_count;) {
    give_up();
    const Point c{px(rng), py(rng)};
    const bool clear = std::all_of(placed.begin(), placed.end(), [&](const Placed& p) { return dist(c, p.center) >= debris_d; });
    if (!clear) continue;
    placed.push_back({c, false, false, -1, true, cut(rng)});
    ++i;
  }

  Scene scene;
  scene.image = GrayImage(spec.width, spec.height, spec.background);
  // Occluded instances first so their occluders overdraw them.
  std::vector<std::size_t> order(placed.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_partition(order.begin(), order.end(), [&](std::size_t i) { return placed[i].occluded; });
  for (std::size_t i : order) {
    const auto& p = placed[i];
    if (p.debris) {
      draw_fragment(scene.image, p.center, spec.target, spec.jitter, p.cut_angle, rng);
    } else {
      draw_object(scene.image, p.center, p.distractor ? *spec.distractor : spec.target, spec.jitter, rng);
    }
  }
  if (spec.noise > 0.0) {
    std::normal_distribution<double> n(0.0, spec.noise);
    for (double& v : scene.image.data()) v += n(rng);
  }
  for (double& v : scene.image.data()) v = std::clamp(v, 0.0, 1.0);

  GroundTruth& t = scene.truth;
  t.width = spec.width;
  t.height = spec.height;
  t.object_size = spec.object_size;
  for (const auto& p : placed) {
    if (p.debris) {
      t.debris.push_back(Vec2(p.center));
      continue;
    }
    t.objects.push_back({Vec2(p.center), p.distractor ? ObjectLabel::kDistractor : ObjectLabel::kTarget, p.occluded});
  }
  const int half = spec.object_size / 2;
  for (std::size_t i = 0; i < placed.size(); ++i) {
    const Point c = placed[i].center;
    const bool hosts = std::any_of(placed.begin(), placed.end(), [&](const Placed& p) { return p.occluder == static_cast<int>(i); });
    if (hosts || placed[i].distractor || placed[i].occluded || placed[i].debris || c.x - half < 0 || c.y - half < 0 || c.x + half >= spec.width || c.y + half >= spec.height) continue;
    t.example_box = {c.x - half, c.y - half, spec.object_size, spec.object_size};
    break;
  }
  if (t.example_box.width == 0) {
    const Point c = placed.front().center;
    t.example_box = {std::max(0, c.x - half), std::max(0, c.y - half), spec.object_size, spec.object_size};
  }
  return scene;
}

nlohmann::json truth_to_json(const GroundTruth& t) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : t.objects) {
    objs.push_back({{"x", o.center.x},
                    {"y", o.center.y},
                    {"label", o.label == ObjectLabel::kTarget ? "target" : "distractor"},
                    {"occluded", o.occluded}});
  }
  nlohmann::json debris = nlohmann::json::array();
  for (const auto& d : t.debris) debris.push_back({{"x", d.x}, {"y", d.y}});
  return {{"width", t.width},
          {"height", t.height},
          {"object_size", t.object_size},
          {"debris", std::move(debris)},
          {"bbox", {t.example_box.x, t.example_box.y, t.example_box.width, t.example_box.height}},
          {"objects", std::move(objs)}};
}

GroundTruth truth_from_json(const nlohmann::json& j) {
  try {
    GroundTruth t;
    t.width = j.at("width").get<int>();
    t.height = j.at("height").get<int>();
    t.object_size = j.value("object_size", 27);
    if (j.contains("bbox")) {
      const auto& b = j.at("bbox");
      t.example_box = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
    }
    if (j.contains("debris")) {
      for (const auto& d : j.at("debris")) t.debris.emplace_back(d.at("x").get<double>(), d.at("y").get<double>());
    }
    for (const auto& o : j.at("objects")) {
      const std::string label = o.value("label", "target");
      if (label != "target" && label != "distractor") throw Error(ErrorCode::kIo, "unknown object label '" + label + "'");
      t.objects.push_back({Vec2(o.at("x").get<double>(), o.at("y").get<double>()),
                           label == "target" ? ObjectLabel::kTarget : ObjectLabel::kDistractor, o.value("occluded", false)});
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("malformed ground truth: ") + e.what());
  }
}

namespace {

nlohmann::json template_to_json(const ObjectTemplate& t) {
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& p : t.parts) parts.push_back({p.dx, p.dy, p.sx, p.sy, p.intensity});
  return {{"radius", t.radius}, {"body", t.body_intensity}, {"parts", parts}};
}

ObjectTemplate template_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "target") return default_target_template();
    if (name == "distractor") return default_distractor_template();
    throw Error(ErrorCode::kInvalidConfig, "unknown template '" + name + "'");
  }
  ObjectTemplate t;
  t.radius = j.at("radius").get<double>();
  t.body_intensity = j.at("body").get<double>();
  for (const auto& p : j.at("parts")) {
    t.parts.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>(), p.at(3).get<double>(),
                       p.at(4).get<double>()});
  }
  return t;
}

}  // namespace

nlohmann::json spec_to_json(const SceneSpec& s) {
  nlohmann::json j = {{"width", s.width},
                      {"height", s.height},
                      {"background", s.background},
                      {"target", template_to_json(s.target)},
                      {"count", s.count},
                      {"jitter", s.jitter},
                      {"noise", s.noise},
                      {"occlusion_rate", s.occlusion_rate},
                      {"distractor_count", s.distractor_count},
                      {"object_size", s.object_size},
                      {"min_spacing", s.min_spacing},
                      {"occlusion_distance", s.occlusion_distance},
                      {"debris_count", s.debris_count},
                      {"debris_spacing", s.debris_spacing},
                      {"seed", s.rng_seed}};
  if (s.distractor) j["distractor"] = template_to_json(*s.distractor);
  return j;
}

SceneSpec spec_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> kKeys = {"width", "height", "background", "target", "count", "jitter", "noise",
                                                 "occlusion_rate", "distractor", "distractor_count", "object_size",
                                                 "min_spacing", "occlusion_distance", "debris_count", "debris_spacing", "seed"};
  try {
    for (const auto& [k, v] : j.items()) {
      if (std::find(kKeys.begin(), kKeys.end(), k) == kKeys.end()) {
        throw Error(ErrorCode::kInvalidConfig, "unknown scene spec key '" + k + "'");
      }
    }
    SceneSpec s;
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.background = j.value("background", s.background);
    if (j.contains("target")) s.target = template_from_json(j.at("target"));
    s.count = j.value("count", s.count);
    s.jitter = j.value("jitter", s.jitter);
    s.noise = j.value("noise", s.noise);
    s.occlusion_rate = j.value("occlusion_rate", s.occlusion_rate);
    if (j.contains("distractor")) s.distractor = template_from_json(j.at("distractor"));
    s.distractor_count = j.value("distractor_count", s.distractor_count);
    s.object_size = j.value("object_size", s.object_size);
    s.min_spacing = j.value("min_spacing", s.min_spacing);
    s.occlusion_distance = j.value("occlusion_distance", s.occlusion_distance);
    s.debris_count = j.value("debris_count", s.debris_count);
    s.debris_spacing = j.value("debris_spacing", s.debris_spacing);
    s.rng_seed = j.value("seed", s.rng_seed);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("malformed scene spec: ") + e.what());
  }
}

DetectionScore score_detections(const std::vector<Vec2>& detections, const GroundTruth& truth, double tol) {
  if (!(tol > 0.0)) throw Error(ErrorCode::kInvalidConfig, "matching tolerance must be positive");
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t d = 0; d < detections.size(); ++d) {
    for (std::size_t t = 0; t < truth.objects.size(); ++t) {
      const double dd = (detections[d] - truth.objects[t].center).norm();
      if (dd <= tol) pairs.emplace_back(dd, d, t);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<char> det_used(detections.size(), 0);
  std::vector<char> truth_used(truth.objects.size(), 0);
  DetectionScore s;
  s.target_found.assign(truth.objects.size(), false);
  int tp = 0;
  for (const auto& [dd, d, t] : pairs) {
    if (det_used[d] || truth_used[t]) continue;
    det_used[d] = truth_used[t] = 1;
    if (truth.objects[t].label == ObjectLabel::kTarget) {
      ++tp;
      s.target_found[t] = true;
    } else {
      ++s.distractor_hits;
    }
  }
  const int targets = truth.target_count();
  s.count_error = static_cast<int>(detections.size()) - targets;
  s.false_positives = static_cast<int>(detections.size()) - tp;
  s.false_negatives = targets - tp;
  const int denom = 2 * tp + s.false_positives + s.false_negatives;
  s.f1 = denom == 0 ? 1.0 : 2.0 * tp / denom;
  return s;
}

void write_scene(const Scene& scene, const std::string& stem) {
  write_png(scene.image, stem + ".png");
  write_text(stem + ".json", truth_to_json(scene.truth).dump(2) + "\n");
}

}  // namespace recurdet
