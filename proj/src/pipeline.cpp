#include "recurdet/pipeline.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>
#include <tuple>

#include "recurdet/correlation.hpp"
#include "recurdet/image_io.hpp"

namespace recurdet {

namespace fs = std::filesystem;

double PipelineConfig::ransac_sigma() const {
  return sigma_ransac > 0.0 ? sigma_ransac : std::ceil(0.74 * mining.object_size());
}

void PipelineConfig::validate() const {
  mining.validate();
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidConfig, m); };
  if (!(ratio_threshold >= 1.0)) fail("ratio_threshold must be >= 1");
  if (!(eccentricity_gate >= 1.0)) fail("eccentricity_gate must be >= 1");
  if (max_lag < 0) fail("max_lag must be >= 0");
  if (!(sigma_ransac >= 0.0)) fail("sigma_ransac must be non-negative");
  if (min_support < 1) fail("min_support must be >= 1");
  if (bins < 1) fail("bins must be >= 1");
  if (!(session.svm_c > 0.0)) fail("svm_c must be positive");
  if (session.slider_size < 2 || session.near_count < 0 || session.far_count < 0 || session.min_batch < 1 ||
      session.max_rounds < 1) {
    fail("session sizes out of range");
  }
  for (int f : disabled_features) {
    if (f < 0 || f >= kFeatureCount) fail("disabled feature index out of range");
  }
}

PipelineConfig config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> kKeys = {
      "epsilon", "patch_side", "candidates_per_round", "stop_fraction", "variance_floor", "max_mining_rounds",
      "ratio_threshold", "eccentricity_gate", "max_lag", "sigma_ransac", "min_support", "bins", "svm_c",
      "slider_size", "near_count", "far_count", "min_batch", "max_session_rounds", "oracle", "disabled_features",
      "report_path", "log_path", "features_path", "model_path"};
  if (!j.is_object()) throw Error(ErrorCode::kInvalidConfig, "config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), k) == kKeys.end()) {
      throw Error(ErrorCode::kInvalidConfig, "unknown config key '" + k + "'");
    }
  }
  PipelineConfig c;
  try {
    c.mining.epsilon = j.value("epsilon", c.mining.epsilon);
    c.mining.patch_side = j.value("patch_side", c.mining.patch_side);
    c.mining.candidates_per_round = j.value("candidates_per_round", c.mining.candidates_per_round);
    c.mining.stop_fraction = j.value("stop_fraction", c.mining.stop_fraction);
    c.mining.variance_floor = j.value("variance_floor", c.mining.variance_floor);
    c.mining.max_rounds = j.value("max_mining_rounds", c.mining.max_rounds);
    c.ratio_threshold = j.value("ratio_threshold", c.ratio_threshold);
    c.eccentricity_gate = j.value("eccentricity_gate", c.eccentricity_gate);
    c.max_lag = j.value("max_lag", c.max_lag);
    c.sigma_ransac = j.value("sigma_ransac", c.sigma_ransac);
    c.min_support = j.value("min_support", c.min_support);
    c.bins = j.value("bins", c.bins);
    c.session.svm_c = j.value("svm_c", c.session.svm_c);
    c.session.slider_size = j.value("slider_size", c.session.slider_size);
    c.session.near_count = j.value("near_count", c.session.near_count);
    c.session.far_count = j.value("far_count", c.session.far_count);
    c.session.min_batch = j.value("min_batch", c.session.min_batch);
    c.session.max_rounds = j.value("max_session_rounds", c.session.max_rounds);
    c.oracle = j.value("oracle", c.oracle);
    c.disabled_features = j.value("disabled_features", c.disabled_features);
    c.report_path = j.value("report_path", c.report_path);
    c.log_path = j.value("log_path", c.log_path);
    c.features_path = j.value("features_path", c.features_path);
    c.model_path = j.value("model_path", c.model_path);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json config_to_json(const PipelineConfig& c) {
  return {{"epsilon", c.mining.epsilon},
          {"patch_side", c.mining.patch_side},
          {"candidates_per_round", c.mining.candidates_per_round},
          {"stop_fraction", c.mining.stop_fraction},
          {"variance_floor", c.mining.variance_floor},
          {"max_mining_rounds", c.mining.max_rounds},
          {"ratio_threshold", c.ratio_threshold},
          {"eccentricity_gate", c.eccentricity_gate},
          {"max_lag", c.max_lag},
          {"sigma_ransac", c.sigma_ransac},
          {"min_support", c.min_support},
          {"bins", c.bins},
          {"svm_c", c.session.svm_c},
          {"slider_size", c.session.slider_size},
          {"near_count", c.session.near_count},
          {"far_count", c.session.far_count},
          {"min_batch", c.session.min_batch},
          {"max_session_rounds", c.session.max_rounds},
          {"oracle", c.oracle},
          {"disabled_features", c.disabled_features},
          {"report_path", c.report_path},
          {"log_path", c.log_path},
          {"features_path", c.features_path},
          {"model_path", c.model_path}};
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path);
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
}

std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stage + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace {

enum Stage : std::uint64_t { kMiningSeed = 1, kRansacSeed = 2, kSessionSeed = 3 };

template <class F>
auto run_stage(const char* name, Analysis& a, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  auto record = [&] {
    const std::chrono::duration<double, std::milli> dt = std::chrono::steady_clock::now() - t0;
    a.timings_ms.emplace_back(name, dt.count());
    spdlog::debug("stage {} took {:.1f} ms", name, dt.count());
  };
  try {
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      record();
    } else {
      auto r = f();
      record();
      return r;
    }
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    spdlog::warn("stage {} failed: {}", name, e.what());
    throw StageError(name, e);
  }
}

}  // namespace

Analysis analyze(const GrayImage& image, const BoundingBox& bbox, const PipelineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Analysis a;
  a.image = image;
  MiningConfig mining = cfg.mining;
  mining.rng_seed = stage_seed(seed, kMiningSeed);

  run_stage("rescale", a, [&] {
    image.validate();
    a.canonical = rescale_to_canonical(image, bbox, mining);
  });
  const GrayImage& img = a.canonical.image;

  run_stage("mining", a, [&] { a.patches = mine_recurrent_patches(img, mining); });
  spdlog::info("mined {} recurrent patches", a.patches.size());
  for (const auto& p : a.patches) spdlog::debug("patch {} at ({}, {}) frequency {}", p.id, p.source.x, p.source.y, p.frequency);

  StructureConfig scfg;
  scfg.ratio_threshold = cfg.ratio_threshold;
  scfg.eccentricity_gate = cfg.eccentricity_gate;
  scfg.epsilon = mining.epsilon;
  scfg.patch_side = mining.patch_side;
  scfg.max_lag = cfg.lag_limit();

  run_stage("edge_correction", a, [&] {
    const NccEngine engine(img, mining.patch_side);
    for (auto& p : a.patches) {
      const CorrelationMap rho = engine.correlate(p.patch);
      if (correlation_shape(rho, scfg).eccentricity <= scfg.eccentricity_gate) continue;
      EdgeCorrection ec = correct_edge_patch(rho, scfg);
      p.hits = hits_of(ec.occurrence, rho);
      p.occurrence = std::move(ec.occurrence);
      p.frequency = static_cast<int>(p.hits.size());
      a.edge_corrected.push_back(p.id);
    }
  });

  run_stage("structure", a, [&] {
    a.graph = prune_graph(build_graph(a.patches, scfg), static_cast<int>(a.patches.size()));
    a.model = embed(a.graph);
  });
  spdlog::info("model keeps {} of {} patches in {} component(s)", a.model.vertices.size(), a.patches.size(),
               a.model.component_count);

  run_stage("detection", a, [&] {
    RansacConfig rc;
    rc.sigma = cfg.ransac_sigma();
    rc.min_support = cfg.min_support;
    rc.rng_seed = stage_seed(seed, kRansacSeed);
    a.votes = collect_votes(a.model, a.patches);
    a.clusters = ransac_cluster(a.votes, rc);
  });
  spdlog::info("{} votes grouped into {} clusters", a.votes.size(), a.clusters.size());

  run_stage("features", a, [&] {
    std::vector<int> ids;
    for (const auto& v : a.model.vertices) ids.push_back(v.id);
    FeatureContext ctx;
    ctx.graph = &a.graph;
    ctx.basis = composition_basis(a.clusters, ids);
    ctx.width = img.width();
    ctx.height = img.height();
    ctx.object_size = mining.object_size();
    ctx.bins = cfg.bins;
    a.raw_features = build_feature_vectors(a.clusters, ctx);
    a.features = a.raw_features;
    a.scaling = zscore_normalize(a.features);
    for (int f : cfg.disabled_features) {
      for (auto& row : a.features) row[static_cast<std::size_t>(f)] = 0.0;
    }
  });

  for (const auto& c : a.clusters) a.centers.push_back(c.center / a.canonical.scale);
  return a;
}

std::vector<bool> oracle_labels(const std::vector<Vec2>& centers, const GroundTruth& truth, double tol) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t k = 0; k < centers.size(); ++k) {
    for (std::size_t t = 0; t < truth.objects.size(); ++t) {
      if (truth.objects[t].label != ObjectLabel::kTarget) continue;
      const double d = (centers[k] - truth.objects[t].center).norm();
      if (d <= tol) pairs.emplace_back(d, k, t);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> label(centers.size(), false);
  std::vector<char> used(truth.objects.size(), 0);
  for (const auto& [d, k, t] : pairs) {
    if (label[k] || used[t]) continue;
    label[k] = true;
    used[t] = 1;
  }
  return label;
}

std::unique_ptr<ActiveSession> make_session(const Analysis& a, const PipelineConfig& cfg, std::uint64_t seed) {
  return std::make_unique<ActiveSession>(a.features, cfg.session, stage_seed(seed, kSessionSeed));
}

DetectResult run_detect(const GrayImage& image, const BoundingBox& bbox, const PipelineConfig& cfg, std::uint64_t seed,
                        const GroundTruth* truth, bool timings) {
  DetectResult r;
  r.analysis = analyze(image, bbox, cfg, seed);
  Analysis& a = r.analysis;

  run_stage("classifier", a, [&] {
    r.session = make_session(a, cfg, seed);
    if (truth != nullptr && cfg.oracle) {
      const auto labels = oracle_labels(a.centers, *truth, truth->object_size / 2.0);
      r.oracle = run_oracle_session(*r.session, labels);
      spdlog::info("oracle session: {} rounds, {} clicks", r.oracle->rounds, r.oracle->clicks);
    }
    r.classification = r.session->result();
  });

  nlohmann::json dets = nlohmann::json::array();
  for (std::size_t k = 0; k < a.clusters.size(); ++k) {
    dets.push_back({{"x", a.centers[k].x},
                    {"y", a.centers[k].y},
                    {"score", r.classification.scores[k]},
                    {"label", r.classification.positive[k] ? "object" : "background"},
                    {"patches", a.clusters[k].members.size()}});
  }
  const auto& st = r.session->state();
  nlohmann::json report = {
      {"count", r.classification.count},
      {"detections", std::move(dets)},
      {"model",
       {{"patches", a.patches.size()},
        {"vertices", a.model.vertices.size()},
        {"edges", a.graph.edges().size()},
        {"components", a.model.component_count},
        {"edge_corrected", a.edge_corrected},
        {"scale", a.canonical.scale}}},
      {"session",
       {{"phase", std::string(phase_name(st.phase))},
        {"rounds", st.round},
        {"clicks", r.session->clicks()},
        {"w", st.separator.w},
        {"b", st.separator.b}}},
      {"seed", seed}};
  if (timings) {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [name, ms] : a.timings_ms) t[name] = ms;
    report["timings_ms"] = t;
  }
  r.report = std::move(report);

  if (!cfg.log_path.empty()) write_text(cfg.log_path, r.session->log_jsonl());
  if (!cfg.features_path.empty()) write_text(cfg.features_path, features_to_csv(a.clusters, a.features));
  if (!cfg.model_path.empty()) write_text(cfg.model_path, model_to_json(a.model, a.patches).dump() + "\n");
  return r;
}

nlohmann::json error_report(const Error& e) {
  nlohmann::json j = {{"error", std::string(error_name(e.code()))}, {"message", e.what()}};
  if (const auto* se = dynamic_cast<const StageError*>(&e)) j["stage"] = se->stage();
  return j;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open manifest " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kIo, std::string("manifest is not valid JSON: ") + e.what());
  }
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestEntry> out;
  try {
    for (const auto& s : j.at("scenes")) {
      ManifestEntry e;
      e.name = s.at("name").get<std::string>();
      e.image = (base / s.at("image").get<std::string>()).string();
      e.truth = (base / s.at("truth").get<std::string>()).string();
      out.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("malformed manifest: ") + e.what());
  }
  return out;
}

SceneMetrics run_scene(const ManifestEntry& entry, const PipelineConfig& cfg, std::uint64_t seed) {
  SceneMetrics m;
  m.name = entry.name;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const GrayImage img = read_image(entry.image);
    std::ifstream in(entry.truth);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + entry.truth);
    GroundTruth truth;
    try {
      truth = truth_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::kIo, std::string("truth is not valid JSON: ") + e.what());
    }
    const DetectResult r = run_detect(img, truth.example_box, cfg, seed, &truth);
    std::vector<Vec2> found;
    for (std::size_t k = 0; k < r.analysis.centers.size(); ++k) {
      if (r.classification.positive[k]) found.push_back(r.analysis.centers[k]);
    }
    const DetectionScore s = score_detections(found, truth, truth.object_size / 2.0);
    m.truth_count = truth.target_count();
    m.count = r.classification.count;
    m.count_error = s.count_error;
    m.false_positives = s.false_positives;
    m.false_negatives = s.false_negatives;
    m.f1 = s.f1;
    m.distractor_hits = s.distractor_hits;
    for (std::size_t t = 0; t < truth.objects.size(); ++t) {
      const auto& o = truth.objects[t];
      if (o.label != ObjectLabel::kTarget) continue;
      if (o.occluded) {
        ++m.occluded_total;
        m.occluded_missed += !s.target_found[t];
      } else {
        ++m.visible_total;
        m.visible_missed += !s.target_found[t];
      }
    }
    m.clusters = static_cast<int>(r.analysis.clusters.size());
    if (r.oracle) {
      m.rounds = r.oracle->rounds;
      m.clicks = r.oracle->clicks;
      m.converged = r.oracle->converged;
    }
    m.ok = true;
  } catch (const Error& e) {
    m.error = std::string(error_name(e.code()));
    if (const auto* se = dynamic_cast<const StageError*>(&e)) m.stage = se->stage();
    spdlog::error("scene {} failed: {}", entry.name, e.what());
  }
  const std::chrono::duration<double, std::milli> dt = std::chrono::steady_clock::now() - t0;
  m.wall_ms = dt.count();
  return m;
}

BenchmarkSummary summarize(std::vector<SceneMetrics> scenes) {
  BenchmarkSummary s;
  s.scenes = std::move(scenes);
  int ok = 0;
  for (const auto& m : s.scenes) {
    if (!m.ok) {
      ++s.failed;
      continue;
    }
    ++ok;
    s.mean_abs_error += std::abs(m.count_error);
    s.mean_h1 += m.false_positives;
    s.mean_h0 += m.false_negatives;
    s.mean_f1 += m.f1;
  }
  if (ok == 0) return s;
  s.mean_abs_error /= ok;
  s.mean_h1 /= ok;
  s.mean_h0 /= ok;
  s.mean_f1 /= ok;
  double var = 0.0;
  for (const auto& m : s.scenes) {
    if (m.ok) var += (std::abs(m.count_error) - s.mean_abs_error) * (std::abs(m.count_error) - s.mean_abs_error);
  }
  s.std_abs_error = std::sqrt(var / ok);
  return s;
}

BenchmarkSummary run_benchmark(const std::vector<ManifestEntry>& scenes, const PipelineConfig& cfg, std::uint64_t seed,
                               int threads) {
  std::vector<SceneMetrics> out(scenes.size());
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(threads > 0 ? static_cast<std::size_t>(threads) : hw, scenes.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < scenes.size(); i = next++) out[i] = run_scene(scenes[i], cfg, seed);
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return summarize(std::move(out));
}

std::string metrics_csv(const BenchmarkSummary& s) {
  std::ostringstream o;
  o.precision(10);
  o << "scene,ok,error,stage,truth,count,count_error,h1,h0,f1,distractor_hits,occluded,occluded_missed,visible,"
       "visible_missed,clusters,rounds,clicks,converged\n";
  for (const auto& m : s.scenes) {
    o << m.name << ',' << m.ok << ',' << m.error << ',' << m.stage << ',' << m.truth_count << ',' << m.count << ','
      << m.count_error << ',' << m.false_positives << ',' << m.false_negatives << ',' << m.f1 << ','
      << m.distractor_hits << ',' << m.occluded_total << ',' << m.occluded_missed << ',' << m.visible_total << ','
      << m.visible_missed << ',' << m.clusters << ',' << m.rounds << ',' << m.clicks << ',' << m.converged << '\n';
  }
  return o.str();
}

nlohmann::json metrics_json(const BenchmarkSummary& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : s.scenes) {
    nlohmann::json r = {{"scene", m.name}, {"ok", m.ok}};
    if (!m.ok) {
      r["error"] = m.error;
      r["stage"] = m.stage;
    } else {
      r.update({{"truth", m.truth_count},
                {"count", m.count},
                {"count_error", m.count_error},
                {"h1", m.false_positives},
                {"h0", m.false_negatives},
                {"f1", m.f1},
                {"distractor_hits", m.distractor_hits},
                {"occluded", m.occluded_total},
                {"occluded_missed", m.occluded_missed},
                {"visible", m.visible_total},
                {"visible_missed", m.visible_missed},
                {"clusters", m.clusters},
                {"rounds", m.rounds},
                {"clicks", m.clicks},
                {"converged", m.converged}});
    }
    rows.push_back(std::move(r));
  }
  return {{"scenes", std::move(rows)},
          {"aggregate",
           {{"scenes", s.scenes.size()},
            {"failed", s.failed},
            {"mean_abs_count_error", s.mean_abs_error},
            {"std_abs_count_error", s.std_abs_error},
            {"mean_h1", s.mean_h1},
            {"mean_h0", s.mean_h0},
            {"mean_f1", s.mean_f1}}}};
}

std::string timings_csv(const BenchmarkSummary& s) {
  std::ostringstream o;
  o.precision(6);
  o << std::fixed << "scene,wall_ms\n";
  for (const auto& m : s.scenes) o << m.name << ',' << m.wall_ms << '\n';
  return o.str();
}

std::vector<ManifestEntry> write_benchmark_scenes(const SceneSpec& base, int scenes, const std::string& dir) {
  fs::create_directories(dir);
  std::vector<ManifestEntry> out;
  nlohmann::json list = nlohmann::json::array();
  for (int i = 0; i < scenes; ++i) {
    SceneSpec spec = base;
    spec.rng_seed = base.rng_seed + static_cast<std::uint64_t>(i);
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03d", i);
    const Scene scene = generate(spec);
    write_scene(scene, (fs::path(dir) / name).string());
    list.push_back({{"name", name}, {"image", std::string(name) + ".png"}, {"truth", std::string(name) + ".json"},
                    {"spec", spec_to_json(spec)}});
    out.push_back({name, (fs::path(dir) / (std::string(name) + ".png")).string(),
                   (fs::path(dir) / (std::string(name) + ".json")).string()});
  }
  write_text((fs::path(dir) / "manifest.json").string(), nlohmann::json{{"scenes", list}}.dump(2) + "\n");
  return out;
}

void configure_logging_from_env() {
  auto logger = spdlog::get("recurdet");
  if (!logger) logger = spdlog::stderr_color_mt("recurdet");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* v = std::getenv("RECURDET_LOG")) {
    const auto level = spdlog::level::from_str(v);
    // from_str maps unknown names to off; only honour names it really knows.
    if (level != spdlog::level::off || std::string(v) == "off") spdlog::set_level(level);
  }
}

}  // namespace recurdet
