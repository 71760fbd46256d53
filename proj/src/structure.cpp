#include "recurdet/structure.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>

namespace recurdet {

PatchGraph::PatchGraph(std::vector<int> vertices, std::vector<PatchPairEdge> edges)
    : vertices_(std::move(vertices)), edges_(std::move(edges)) {
  std::sort(vertices_.begin(), vertices_.end());
  vertices_.erase(std::unique(vertices_.begin(), vertices_.end()), vertices_.end());
  for (auto& e : edges_) {
    if (e.i == e.j) throw Error(ErrorCode::kInvalidConfig, "self-edge in patch graph");
    if (e.i > e.j) {
      std::swap(e.i, e.j);
      e.offset = -e.offset;
    }
    if (!has_vertex(e.i) || !has_vertex(e.j)) throw Error(ErrorCode::kInvalidConfig, "edge references unknown vertex");
  }
  std::sort(edges_.begin(), edges_.end(), [](const auto& a, const auto& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  for (std::size_t k = 1; k < edges_.size(); ++k) {
    if (edges_[k].i == edges_[k - 1].i && edges_[k].j == edges_[k - 1].j) {
      throw Error(ErrorCode::kInvalidConfig, "duplicate edge in patch graph");
    }
  }
}

bool PatchGraph::has_vertex(int id) const { return std::binary_search(vertices_.begin(), vertices_.end(), id); }

int PatchGraph::degree(int id) const {
  int d = 0;
  for (const auto& e : edges_) d += (e.i == id || e.j == id);
  return d;
}

std::optional<Vec2> PatchGraph::offset(int a, int b) const {
  const int lo = std::min(a, b);
  const int hi = std::max(a, b);
  auto it = std::lower_bound(edges_.begin(), edges_.end(), std::pair{lo, hi}, [](const PatchPairEdge& e, const std::pair<int, int>& k) {
    return e.i != k.first ? e.i < k.first : e.j < k.second;
  });
  if (it == edges_.end() || it->i != lo || it->j != hi) return std::nullopt;
  return a == lo ? it->offset : -it->offset;
}

const ModelVertex* EmbeddedModel::find(int id) const {
  auto it = std::lower_bound(vertices.begin(), vertices.end(), id, [](const ModelVertex& v, int k) { return v.id < k; });
  return it != vertices.end() && it->id == id ? &*it : nullptr;
}

std::optional<PatchPairEdge> detect_pair(const BinaryMap& z_i, const BinaryMap& z_j, double ratio_threshold, int max_lag,
                                         int suppression) {
  const auto pi = z_i.set_pixels();
  const auto pj = z_j.set_pixels();
  if (pi.empty() || pj.empty()) return std::nullopt;
  const LagMap tau = cross_correlate_binary(z_i, z_j, max_lag);

  // Ties are broken in a frame fixed by the maps' contents, so swapping the
  // arguments yields exactly the negated offset.
  const bool flip = pj < pi;
  const auto canonical = [flip](int dx, int dy) { return flip ? Point{-dx, -dy} : Point{dx, dy}; };

  const int rx = tau.radius_x();
  const int ry = tau.radius_y();
  double best = -1.0;
  Point arg{0, 0};
  for (int dy = -ry; dy <= ry; ++dy) {
    for (int dx = -rx; dx <= rx; ++dx) {
      const double v = tau.at(dx, dy);
      if (v > best || (v == best && canonical(dx, dy) < canonical(arg.x, arg.y))) {
        best = v;
        arg = {dx, dy};
      }
    }
  }
  if (!(best > 0.0)) return std::nullopt;

  const int excl = suppression / 2;
  double second = 0.0;
  for (int dy = -ry; dy <= ry; ++dy) {
    for (int dx = -rx; dx <= rx; ++dx) {
      if (std::abs(dx - arg.x) <= excl && std::abs(dy - arg.y) <= excl) continue;
      const double v = tau.at(dx, dy);
      if (!(v > second)) continue;
      bool local_max = true;
      for (int ny = dy - 1; local_max && ny <= dy + 1; ++ny) {
        for (int nx = dx - 1; nx <= dx + 1; ++nx) {
          if ((nx == dx && ny == dy) || !tau.contains(nx, ny)) continue;
          if (!(v > tau.at(nx, ny))) {
            local_max = false;
            break;
          }
        }
      }
      if (local_max) second = v;
    }
  }
  const double ratio = second > 0.0 ? best / second : std::numeric_limits<double>::infinity();
  if (!(ratio > ratio_threshold)) return std::nullopt;
  return PatchPairEdge{0, 0, Vec2(arg), ratio};
}

GaussianFit fit_gaussian(const LagMap& r) {
  if (!(r.at(0, 0) > 0.0)) throw Error(ErrorCode::kZeroMass, "no positive mass at zero lag");
  const int rx = r.radius_x();
  const int ry = r.radius_y();
  Raster<std::uint8_t> seen(2 * rx + 1, 2 * ry + 1, 0);
  std::deque<Point> queue{{0, 0}};
  seen(rx, ry) = 1;
  double mass = 0.0;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  while (!queue.empty()) {
    const Point p = queue.front();
    queue.pop_front();
    const double w = r.at(p.x, p.y);
    mass += w;
    sxx += w * p.x * p.x;
    sxy += w * p.x * p.y;
    syy += w * p.y * p.y;
    for (int ny = p.y - 1; ny <= p.y + 1; ++ny) {
      for (int nx = p.x - 1; nx <= p.x + 1; ++nx) {
        if (!r.contains(nx, ny) || seen(nx + rx, ny + ry) != 0 || !(r.at(nx, ny) > 0.0)) continue;
        seen(nx + rx, ny + ry) = 1;
        queue.push_back({nx, ny});
      }
    }
  }
  GaussianFit fit;
  fit.cxx = sxx / mass;
  fit.cxy = sxy / mass;
  fit.cyy = syy / mass;
  Eigen::Matrix2d cov;
  cov << fit.cxx, fit.cxy, fit.cxy, fit.cyy;
  const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(cov).eigenvalues();
  const double lmax = std::max(ev(1), 0.0);
  const double lmin = std::max(ev(0), 0.0);
  if (lmax <= 1e-12) {
    fit.eccentricity = 1.0;
  } else if (lmin <= 1e-12 * lmax) {
    fit.eccentricity = std::numeric_limits<double>::infinity();
  } else {
    fit.eccentricity = std::sqrt(lmax / lmin);
  }
  return fit;
}

namespace {

Raster<double> positive_part(const CorrelationMap& rho) {
  Raster<double> f(rho.width(), rho.height(), 0.0);
  for (std::size_t i = 0; i < rho.size(); ++i) f.data()[i] = std::max(rho.data()[i], 0.0);
  return f;
}

}  // namespace

GaussianFit correlation_shape(const CorrelationMap& rho, const StructureConfig& cfg) {
  const Raster<double> f = positive_part(rho);
  return fit_gaussian(auto_correlation(f, 3 * cfg.patch_side));
}

EdgeCorrection correct_edge_patch(const CorrelationMap& rho, const StructureConfig& cfg) {
  EdgeCorrection out;
  const Raster<double> f = positive_part(rho);
  out.fit = fit_gaussian(auto_correlation(f, 3 * cfg.patch_side));
  // Covariances add under convolution: half the covariance is the square root.
  const LagMap root = gaussian_kernel(out.fit.cxx / 2, out.fit.cxy / 2, out.fit.cyy / 2);
  out.filtered = filter_same(f, root);
  double peak = 0.0;
  for (double v : out.filtered.data()) peak = std::max(peak, v);
  out.occurrence = BinaryMap(rho.width(), rho.height(), 0);
  if (peak > 0.0) {
    BinaryMap z = non_max_suppress(out.filtered, (1.0 - cfg.epsilon) * peak, cfg.patch_side);
    out.occurrence = std::move(z);
  }
  return out;
}

PatchGraph build_graph(const std::vector<RecurrentPatch>& patches, const StructureConfig& cfg) {
  std::vector<int> ids;
  std::vector<PatchPairEdge> edges;
  for (const auto& p : patches) ids.push_back(p.id);
  for (std::size_t a = 0; a < patches.size(); ++a) {
    for (std::size_t b = a + 1; b < patches.size(); ++b) {
      auto e = detect_pair(patches[a].occurrence, patches[b].occurrence, cfg.ratio_threshold, cfg.max_lag, cfg.patch_side);
      if (!e) continue;
      e->i = patches[a].id;
      e->j = patches[b].id;
      edges.push_back(*e);
    }
  }
  return PatchGraph(std::move(ids), std::move(edges));
}

PatchGraph prune_graph(const PatchGraph& g, int n) {
  const int min_degree = (n + 9) / 10;
  std::vector<int> keep;
  for (int v : g.vertices()) {
    if (g.degree(v) >= min_degree) keep.push_back(v);
  }
  if (keep.empty()) throw Error(ErrorCode::kEmptyGraph, "no patch has enough correlated partners");
  std::vector<PatchPairEdge> edges;
  for (const auto& e : g.edges()) {
    if (std::binary_search(keep.begin(), keep.end(), e.i) && std::binary_search(keep.begin(), keep.end(), e.j)) {
      edges.push_back(e);
    }
  }
  return PatchGraph(std::move(keep), std::move(edges));
}

EmbeddedModel embed(const PatchGraph& g) {
  const auto& verts = g.vertices();
  const int n = static_cast<int>(verts.size());
  std::map<int, int> index;
  for (int k = 0; k < n; ++k) index[verts[static_cast<std::size_t>(k)]] = k;
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (const auto& e : g.edges()) {
    adj[static_cast<std::size_t>(index[e.i])].push_back(index[e.j]);
    adj[static_cast<std::size_t>(index[e.j])].push_back(index[e.i]);
  }

  std::vector<int> component(static_cast<std::size_t>(n), -1);
  int components = 0;
  for (int s = 0; s < n; ++s) {
    if (component[static_cast<std::size_t>(s)] >= 0) continue;
    std::deque<int> queue{s};
    component[static_cast<std::size_t>(s)] = components;
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      for (int u : adj[static_cast<std::size_t>(v)]) {
        if (component[static_cast<std::size_t>(u)] < 0) {
          component[static_cast<std::size_t>(u)] = components;
          queue.push_back(u);
        }
      }
    }
    ++components;
  }

  EmbeddedModel model;
  model.component_count = components;
  model.vertices.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    model.vertices[static_cast<std::size_t>(k)] = {verts[static_cast<std::size_t>(k)], Vec2{}, component[static_cast<std::size_t>(k)]};
  }

  for (int c = 0; c < components; ++c) {
    std::vector<int> members;
    for (int k = 0; k < n; ++k) {
      if (component[static_cast<std::size_t>(k)] == c) members.push_back(k);
    }
    const int m = static_cast<int>(members.size());
    if (m == 1) continue;
    std::map<int, int> local;
    for (int a = 0; a < m; ++a) local[members[static_cast<std::size_t>(a)]] = a;

    // Normal equations of the offset misfit; the rank-one term pins the mean to zero.
    Eigen::MatrixXd lap = Eigen::MatrixXd::Constant(m, m, 1.0 / m);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m, 2);
    for (const auto& e : g.edges()) {
      const int gi = index[e.i];
      if (component[static_cast<std::size_t>(gi)] != c) continue;
      const int a = local[gi];
      const int b = local[index[e.j]];
      lap(a, a) += 1.0;
      lap(b, b) += 1.0;
      lap(a, b) -= 1.0;
      lap(b, a) -= 1.0;
      rhs(b, 0) += e.offset.x;
      rhs(b, 1) += e.offset.y;
      rhs(a, 0) -= e.offset.x;
      rhs(a, 1) -= e.offset.y;
    }
    Eigen::MatrixXd sol = lap.ldlt().solve(rhs);
    const Eigen::RowVector2d mean = sol.colwise().mean();
    sol.rowwise() -= mean;
    for (int a = 0; a < m; ++a) {
      model.vertices[static_cast<std::size_t>(members[static_cast<std::size_t>(a)])].coord = {sol(a, 0), sol(a, 1)};
    }
  }
  return model;
}

double embedding_objective(const PatchGraph& g, const EmbeddedModel& m) {
  double total = 0.0;
  for (const auto& e : g.edges()) {
    const auto* vi = m.find(e.i);
    const auto* vj = m.find(e.j);
    if (vi == nullptr || vj == nullptr) continue;
    total += (vj->coord - vi->coord - e.offset).squared_norm();
  }
  return total;
}

nlohmann::json model_to_json(const EmbeddedModel& model, const std::vector<RecurrentPatch>& patches) {
  nlohmann::json doc;
  doc["component_count"] = model.component_count;
  doc["vertices"] = nlohmann::json::array();
  for (const auto& v : model.vertices) {
    auto it = std::find_if(patches.begin(), patches.end(), [&](const RecurrentPatch& p) { return p.id == v.id; });
    nlohmann::json jv{{"id", v.id}, {"x", v.coord.x}, {"y", v.coord.y}, {"component", v.component}};
    if (it != patches.end()) {
      jv["side"] = it->patch.side();
      jv["pixels"] = std::vector<double>(it->patch.data().begin(), it->patch.data().end());
    }
    doc["vertices"].push_back(std::move(jv));
  }
  return doc;
}

std::pair<EmbeddedModel, std::vector<std::pair<int, Patch>>> model_from_json(const nlohmann::json& doc) {
  EmbeddedModel model;
  std::vector<std::pair<int, Patch>> blocks;
  model.component_count = doc.at("component_count").get<int>();
  for (const auto& jv : doc.at("vertices")) {
    ModelVertex v{jv.at("id").get<int>(), {jv.at("x").get<double>(), jv.at("y").get<double>()}, jv.at("component").get<int>()};
    model.vertices.push_back(v);
    if (jv.contains("pixels")) blocks.emplace_back(v.id, Patch(jv.at("side").get<int>(), jv.at("pixels").get<std::vector<double>>()));
  }
  std::sort(model.vertices.begin(), model.vertices.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return {std::move(model), std::move(blocks)};
}

}  // namespace recurdet
