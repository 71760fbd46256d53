#include "recurdet/patch_mining.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace recurdet {

void MiningConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error(ErrorCode::kInvalidConfig, "epsilon must lie in (0,1)");
  if (!(stop_fraction > 0.0 && stop_fraction < 1.0)) throw Error(ErrorCode::kInvalidConfig, "stop_fraction must lie in (0,1)");
  if (patch_side < 3 || patch_side % 2 == 0) throw Error(ErrorCode::kInvalidConfig, "patch_side must be odd and >= 3");
  if (candidates_per_round < 1) throw Error(ErrorCode::kInvalidConfig, "candidates_per_round must be positive");
  if (!(variance_floor >= 0.0)) throw Error(ErrorCode::kInvalidConfig, "variance_floor must be non-negative");
  if (max_rounds < 1) throw Error(ErrorCode::kInvalidConfig, "max_rounds must be positive");
}

GrayImage resize_bilinear(const GrayImage& img, int width, int height) {
  GrayImage out(width, height);
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double tx = fx - x0;
      const double top = img(x0, y0) * (1 - tx) + img(x1, y0) * tx;
      const double bottom = img(x0, y1) * (1 - tx) + img(x1, y1) * tx;
      out(x, y) = top * (1 - ty) + bottom * ty;
    }
  }
  return out;
}

RescaledImage rescale_to_canonical(const GrayImage& img, const BoundingBox& bbox, const MiningConfig& cfg) {
  if (bbox.x < 0 || bbox.y < 0 || bbox.x + bbox.width > img.width() || bbox.y + bbox.height > img.height()) {
    throw Error(ErrorCode::kDegenerateBox, "bounding box exceeds the image");
  }
  if (std::min(bbox.width, bbox.height) < 4) {
    throw Error(ErrorCode::kDegenerateBox, "bounding box sides must be at least 4 pixels");
  }
  const double scale = static_cast<double>(cfg.object_size()) / std::max(bbox.width, bbox.height);
  if (scale == 1.0) return {img, 1.0};
  const int w = std::max(1, static_cast<int>(std::lround(img.width() * scale)));
  const int h = std::max(1, static_cast<int>(std::lround(img.height() * scale)));
  return {resize_bilinear(img, w, h), scale};
}

BinaryMap occurrence_map(const CorrelationMap& rho, const MiningConfig& cfg, const BinaryMap* blocked) {
  BinaryMap z = non_max_suppress(rho, 1.0 - cfg.epsilon, cfg.patch_side);
  if (blocked != nullptr) {
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (blocked->data()[i] != 0) z.data()[i] = 0;
    }
  }
  return z;
}

std::vector<Hit> hits_of(const BinaryMap& occurrence, const Raster<double>& rho) {
  std::vector<Hit> hits;
  for (const auto& p : occurrence.set_pixels()) hits.push_back({p, rho(p.x, p.y)});
  return hits;
}

namespace {

// Marks every pixel whose patch window would contain one of the set pixels.
void block_around(BinaryMap& blocked, const BinaryMap& occurrence, int half) {
  for (const auto& p : occurrence.set_pixels()) {
    for (int y = std::max(0, p.y - half); y <= std::min(blocked.height() - 1, p.y + half); ++y) {
      for (int x = std::max(0, p.x - half); x <= std::min(blocked.width() - 1, p.x + half); ++x) blocked(x, y) = 1;
    }
  }
}

}  // namespace

std::vector<RecurrentPatch> mine_recurrent_patches(const GrayImage& img, const MiningConfig& cfg) {
  cfg.validate();
  const int side = cfg.patch_side;
  const int half = side / 2;
  if (img.width() < 3 * side || img.height() < 3 * side) {
    throw Error(ErrorCode::kImageTooSmall, "image must span at least three patch widths");
  }

  const NccEngine engine(img, side);
  BinaryMap blocked(img.width(), img.height(), 0);
  std::mt19937_64 rng(cfg.rng_seed);
  std::vector<RecurrentPatch> patches;
  int max_frequency = 0;

  for (int round = 0; round < cfg.max_rounds; ++round) {
    std::vector<Point> admissible;
    for (int y = half; y + half < img.height(); ++y) {
      for (int x = half; x + half < img.width(); ++x) {
        if (blocked(x, y) == 0 && engine.window_variance({x, y}) >= cfg.variance_floor && engine.window_variance({x, y}) > 0.0) {
          admissible.push_back({x, y});
        }
      }
    }
    if (admissible.empty()) break;

    // Distinct uniform draws by partial Fisher-Yates.
    const int k = std::min<int>(cfg.candidates_per_round, static_cast<int>(admissible.size()));
    for (int i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), admissible.size() - 1);
      std::swap(admissible[static_cast<std::size_t>(i)], admissible[pick(rng)]);
    }

    RecurrentPatch best;
    best.frequency = -1;
    for (int i = 0; i < k; ++i) {
      const Point c = admissible[static_cast<std::size_t>(i)];
      Patch p = Patch::cut(img, c, side);
      const CorrelationMap rho = engine.correlate(p);
      BinaryMap z = occurrence_map(rho, cfg, &blocked);
      const int freq = static_cast<int>(z.count());
      if (freq > best.frequency) {
        best.patch = std::move(p);
        best.hits = hits_of(z, rho);
        best.occurrence = std::move(z);
        best.frequency = freq;
        best.source = c;
      }
    }

    if (patches.empty()) {
      if (best.frequency < 2) throw Error(ErrorCode::kNoRecurrence, "no candidate patch recurs in the image");
    } else if (best.frequency < cfg.stop_fraction * max_frequency) {
      break;
    }
    best.id = static_cast<int>(patches.size());
    max_frequency = std::max(max_frequency, best.frequency);
    block_around(blocked, best.occurrence, half);
    patches.push_back(std::move(best));
  }

  if (patches.empty()) throw Error(ErrorCode::kNoRecurrence, "no admissible candidate patch (image too flat)");
  return patches;
}

}  // namespace recurdet
