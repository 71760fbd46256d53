// Acceptance run: one PASS/FAIL line per criterion, INFO lines for
// documented-only measurements. Exit status 1 if any criterion fails.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "recurdet/correlation.hpp"
#include "recurdet/detection.hpp"
#include "recurdet/image_io.hpp"
#include "recurdet/pipeline.hpp"
#include "recurdet/session.hpp"
#include "recurdet/structure.hpp"
#include "recurdet/svm.hpp"
#include "recurdet/synth.hpp"

using namespace recurdet;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void verdict(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

void info(const std::string& name, const std::string& detail) {
  std::printf("INFO %s: %s\n", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Scenario {
  std::string name;
  SceneSpec spec;
  int scenes = 0;
  std::vector<ManifestEntry> entries;
};

Scenario make_scenario(const fs::path& root, const std::string& name, SceneSpec spec, int scenes) {
  Scenario s{name, spec, scenes, {}};
  s.entries = write_benchmark_scenes(spec, scenes, (root / name).string());
  return s;
}

BenchmarkSummary run(const Scenario& s, const PipelineConfig& cfg) {
  return run_benchmark(s.entries, cfg, 1, 1);
}

int sum(const BenchmarkSummary& b, int SceneMetrics::*field) {
  int t = 0;
  for (const auto& m : b.scenes) t += m.*field;
  return t;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---- numerical property suite ------------------------------------------------

double direct_ncc(const GrayImage& img, const Patch& p, int x, int y) {
  const int r = p.half();
  if (x - r < 0 || y - r < 0 || x + r >= img.width() || y + r >= img.height()) return -1.0;
  double wm = 0.0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) wm += img(x + dx, y + dy);
  wm /= static_cast<double>(p.side() * p.side());
  double num = 0.0, wn = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const double b = img(x + dx, y + dy) - wm;
      num += (p.at(dx + r, dy + r) - p.mean()) * b;
      wn += b * b;
    }
  }
  return wn <= 0.0 ? 0.0 : num / (p.deviation() * std::sqrt(wn));
}

double ncc_worst_error() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    GrayImage img(32, 32, 0.0);
    for (double& v : img.data()) v = u(rng);
    const Patch p = Patch::cut(img, {4 + static_cast<int>(rng() % 24), 4 + static_cast<int>(rng() % 24)}, 9);
    const CorrelationMap fft = ncc_map(img, p, NccMethod::kFft);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) worst = std::max(worst, std::abs(fft(x, y) - direct_ncc(img, p, x, y)));
  }
  return worst;
}

double tree_embedding_error() {
  std::mt19937_64 rng(102);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 20);
    std::vector<Vec2> pos(static_cast<std::size_t>(n));
    for (auto& p : pos) p = {u(rng), u(rng)};
    std::vector<int> ids;
    std::vector<PatchPairEdge> edges;
    for (int v = 0; v < n; ++v) ids.push_back(v);
    for (int v = 1; v < n; ++v) {
      const int parent = static_cast<int>(rng() % static_cast<std::uint64_t>(v));
      edges.push_back({parent, v, pos[static_cast<std::size_t>(v)] - pos[static_cast<std::size_t>(parent)], 3.0});
    }
    const PatchGraph g(ids, edges);
    const EmbeddedModel m = embed(g);
    for (const auto& e : g.edges()) worst = std::max(worst, (m.find(e.j)->coord - m.find(e.i)->coord - e.offset).norm());
  }
  return worst;
}

// Smallest objective gain over random perturbations of the embedding; >= 0 at a minimum.
double embedding_probe() {
  std::mt19937_64 rng(103);
  std::uniform_real_distribution<double> u(-15.0, 15.0);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 1e300;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 4 + static_cast<int>(rng() % 10);
    std::vector<int> ids;
    std::vector<PatchPairEdge> edges;
    for (int v = 0; v < n; ++v) ids.push_back(v);
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if (b == a + 1 || rng() % 3 == 0) edges.push_back({a, b, {u(rng), u(rng)}, 3.0});
    const PatchGraph graph(ids, edges);
    const EmbeddedModel m = embed(graph);
    const double base = embedding_objective(graph, m);
    for (int k = 0; k < 100; ++k) {
      EmbeddedModel moved = m;
      const double scale = k < 50 ? 1e-3 : 1.0;
      for (auto& v : moved.vertices) v.coord += Vec2(scale * g(rng), scale * g(rng));
      worst = std::min(worst, embedding_objective(graph, moved) - base);
    }
  }
  return worst;
}

double ransac_recall() {
  std::mt19937_64 rng(104);
  std::uniform_real_distribution<double> off(-4.0, 4.0), unit(-1.0, 1.0);
  int matched = 0, total = 0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Vec2> centers;
    for (int j = 0; j < 6; ++j)
      for (int i = 0; i < 6; ++i) centers.push_back({40.0 + 36 * i + off(rng), 40.0 + 36 * j + off(rng)});
    std::vector<Vote> votes;
    for (const Vec2& c : centers) {
      const int n = 3 + static_cast<int>(rng() % 4);
      for (int p = 0; p < n; ++p) {
        Vec2 d;
        do d = {unit(rng), unit(rng)};
        while (d.norm() > 1.0);
        const Vec2 v = c + d * 5.0;
        votes.push_back({p, v, Point{static_cast<int>(std::lround(v.x)), static_cast<int>(std::lround(v.y))}, 0.97});
      }
    }
    std::shuffle(votes.begin(), votes.end(), rng);
    RansacConfig cfg;
    cfg.rng_seed = rng();
    const auto clusters = ransac_cluster(votes, cfg);
    for (const Vec2& c : centers) {
      ++total;
      matched += std::any_of(clusters.begin(), clusters.end(), [&](const Cluster& k) { return (k.center - c).norm() <= 10.0; });
    }
  }
  return static_cast<double>(matched) / total;
}

int bar_count() {
  constexpr int kBars = 20;
  GrayImage img(kBars * 14 + 20, 90, 0.1);
  for (int k = 0; k < kBars; ++k)
    for (int y = 15; y < 75; ++y)
      for (int x = 10 + 14 * k; x < 15 + 14 * k; ++x) img(x, y) = 0.8;
  const CorrelationMap rho = ncc_map(img, Patch::cut(img, {10, 45}, 9));
  return static_cast<int>(correct_edge_patch(rho, StructureConfig{}).occurrence.count());
}

double svm_probe() {
  std::mt19937_64 rng(105);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 1e300;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::vector<double>> pts;
    std::vector<int> y;
    for (int i = 0; i < 80; ++i) {
      std::vector<double> p(kFeatureCount);
      for (double& v : p) v = g(rng);
      pts.push_back(p);
      y.push_back(p[0] - 0.6 * p[4] + 0.8 * g(rng) > 0 ? 1 : -1);
    }
    const Separator s = train_soft_svm(pts, y);
    const double base = svm_objective(s, pts, y, 10.0);
    for (int k = 0; k < 100; ++k) {
      Separator q = s;
      const double scale = k < 50 ? 1e-3 : 1e-1;
      for (double& v : q.w) v += scale * g(rng);
      q.b += scale * g(rng);
      worst = std::min(worst, svm_objective(q, pts, y, 10.0) - base);
    }
  }
  return worst;
}

// Scripted rounds on a one-dimensional score line; returns mismatches against the update rule.
int margin_transcripts() {
  Features f;
  for (int i = 0; i < 100; ++i) {
    FeatureVector v{};
    v[kPatchCount] = i;
    f.push_back(v);
  }
  int bad = 0;
  auto expect = [&](bool ok) { bad += !ok; };
  const SessionState s0 = set_bias(init_session(f), 49.5);
  expect(std::abs(s0.delta_plus - std::min(49.5 - s0.b_min, s0.b_max - 49.5)) < 1e-12 && s0.delta_plus == s0.delta_minus);
  for (int scenario = 0; scenario < 4; ++scenario) {
    SessionState s = s0;
    const QueryBatch batch = next_query_batch(s, f, 40 + static_cast<std::uint64_t>(scenario));
    std::map<int, bool> resp;
    for (const auto& e : batch.entries) resp[e.cluster] = e.predicted_positive;
    bool flip_plus = scenario == 1 || scenario == 3, flip_minus = scenario == 2 || scenario == 3;
    for (const auto& e : batch.entries) {
      if (flip_plus && e.zone == Zone::kFarPositive) resp[e.cluster] = false, flip_plus = false;
      if (flip_minus && e.zone == Zone::kFarNegative) resp[e.cluster] = true, flip_minus = false;
    }
    const RoundResult r = apply_corrections(s, f, batch, resp);
    const bool grew_plus = scenario == 1 || scenario == 3, grew_minus = scenario == 2 || scenario == 3;
    const double dp = std::min((grew_plus ? 2.0 : 0.5) * s0.delta_plus, r.state.b_max - r.state.separator.b);
    const double dm = std::min((grew_minus ? 2.0 : 0.5) * s0.delta_minus, r.state.separator.b - r.state.b_min);
    expect(std::abs(r.state.delta_plus - dp) < 1e-9);
    expect(std::abs(r.state.delta_minus - dm) < 1e-9);
    expect((r.state.phase == Phase::kConverged) == (scenario == 0));
  }
  return bad;
}

void numerical_suite() {
  const double ncc = ncc_worst_error();
  const double tree = tree_embedding_error();
  const double emb = embedding_probe();
  const double recall = ransac_recall();
  const int bars = bar_count();
  const double svm = svm_probe();
  const int transcripts = margin_transcripts();
  info("numeric.ncc", fmt("fft vs direct max |diff| %.2e (<= 1e-6)", ncc));
  info("numeric.embed-tree", fmt("max edge misfit %.2e (<= 1e-8)", tree));
  info("numeric.embed-optimality", fmt("min objective gain under perturbation %.2e (>= -1e-9)", emb));
  info("numeric.ransac-recall", fmt("%.3f (>= 0.95)", recall));
  info("numeric.edge-bars", fmt("%d peaks for 20 bars (18..22)", bars));
  info("numeric.svm-optimality", fmt("min objective gain under perturbation %.2e (>= -1e-5)", svm));
  info("numeric.margin-transcripts", fmt("%d mismatches", transcripts));
  const bool ok = ncc <= 1e-6 && tree <= 1e-8 && emb >= -1e-9 && recall >= 0.95 && std::abs(bars - 20) <= 2 && svm >= -1e-5 &&
                  transcripts == 0;
  verdict(ok, "numerical-property-suite", ok ? "all seven probes within bounds" : "see numeric.* lines");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  bool ablation = false;
  std::string scratch;
  app.add_flag("--feature-ablation", ablation, "Also drop each feature in turn on the distractor scenes");
  app.add_option("--scratch", scratch, "Directory for generated scenes");
  CLI11_PARSE(app, argc, argv);
  configure_logging_from_env();

  const fs::path root = scratch.empty() ? fs::temp_directory_path() / ("recurdet_acceptance_" + std::to_string(::getpid())) : fs::path(scratch);
  fs::remove_all(root);
  fs::create_directories(root);
  const PipelineConfig defaults;

  std::vector<SceneMetrics> all_default;
  auto keep = [&](const BenchmarkSummary& b) { all_default.insert(all_default.end(), b.scenes.begin(), b.scenes.end()); };

  // Counting accuracy.
  SceneSpec counting;
  counting.count = 100;
  counting.jitter = 3;
  counting.noise = 0.02;
  counting.rng_seed = 100;
  const Scenario count_set = make_scenario(root, "counting", counting, 10);
  const BenchmarkSummary cs = run(count_set, defaults);
  keep(cs);
  double max_wall = 0.0;
  for (const auto& m : cs.scenes) max_wall = std::max(max_wall, m.wall_ms / 1000.0);
  verdict(cs.failed == 0 && cs.mean_abs_error <= 3.0 && cs.std_abs_error <= 2.0 && max_wall <= 60.0, "counting-accuracy",
          fmt("mean |err| %.2f (<= 3), std %.2f (<= 2), slowest scene %.1f s (<= 60), %d of 10 scenes failed", cs.mean_abs_error,
              cs.std_abs_error, max_wall, cs.failed));

  // Minimum repetition.
  SceneSpec minrep;
  minrep.width = minrep.height = 200;
  minrep.jitter = 2;
  minrep.noise = 0.02;
  minrep.rng_seed = 200;
  minrep.count = 25;
  const BenchmarkSummary m25 = run(make_scenario(root, "minrep25", minrep, 8), defaults);
  keep(m25);
  double worst_f1 = 1.0;
  for (const auto& m : m25.scenes) worst_f1 = std::min(worst_f1, m.ok ? m.f1 : 0.0);
  verdict(worst_f1 >= 0.9, "minimum-repetition", fmt("25 objects: worst F1 %.3f, mean F1 %.3f over 8 scenes (each >= 0.9)", worst_f1, m25.mean_f1));
  for (int n : {20, 15, 10}) {
    minrep.count = n;
    const BenchmarkSummary b = run(make_scenario(root, "minrep" + std::to_string(n), minrep, 8), defaults);
    double lo = 1.0;
    for (const auto& m : b.scenes) lo = std::min(lo, m.ok ? m.f1 : 0.0);
    info("minimum-repetition", fmt("%d objects: mean F1 %.3f, worst %.3f, %d failed", n, b.mean_f1, lo, b.failed));
  }

  // Distractor separation.
  SceneSpec two;
  two.count = 60;
  two.distractor = default_distractor_template();
  two.distractor_count = 40;
  two.jitter = 1;
  two.noise = 0.02;
  two.rng_seed = 300;
  const Scenario dist_set = make_scenario(root, "distractor", two, 10);
  const BenchmarkSummary ds = run(dist_set, defaults);
  keep(ds);
  PipelineConfig no_pca = defaults;
  no_pca.disabled_features = {kComposition1, kComposition2, kComposition3};
  const BenchmarkSummary dn = run(dist_set, no_pca);
  const double distractors = 40.0 * dist_set.scenes;
  const double rate = sum(ds, &SceneMetrics::distractor_hits) / distractors;
  const double rate_no_pca = sum(dn, &SceneMetrics::distractor_hits) / distractors;
  verdict(ds.failed == 0 && rate <= 0.05 && rate_no_pca > rate, "distractor-separation",
          fmt("%.1f%% of distractors counted (<= 5%%), %.1f%% without composition features (must be higher)", 100 * rate,
              100 * rate_no_pca));

  // Occlusion handling.
  SceneSpec occ;
  occ.width = occ.height = 480;
  occ.occlusion_rate = 0.15;
  occ.occlusion_distance = 0.7;
  occ.debris_count = 20;
  occ.jitter = 1;
  occ.noise = 0.02;
  occ.rng_seed = 400;
  const Scenario occ_set = make_scenario(root, "occlusion", occ, 20);
  const BenchmarkSummary os = run(occ_set, defaults);
  keep(os);
  PipelineConfig no_occ = defaults;
  for (int f = kOcclusionBlock; f < kFeatureCount; ++f) no_occ.disabled_features.push_back(f);
  const BenchmarkSummary on = run(occ_set, no_occ);
  auto rates = [&](const BenchmarkSummary& b) {
    const double o = static_cast<double>(sum(b, &SceneMetrics::occluded_missed)) / std::max(1, sum(b, &SceneMetrics::occluded_total));
    const double v = static_cast<double>(sum(b, &SceneMetrics::visible_missed)) / std::max(1, sum(b, &SceneMetrics::visible_total));
    return std::pair{o, v};
  };
  const auto [occ_fn, vis_fn] = rates(os);
  const auto [occ_fn_off, vis_fn_off] = rates(on);
  info("occlusion", fmt("missed %d of %d occluded, %d of %d visible; block zeroed: %d of %d occluded, %d of %d visible",
                        sum(os, &SceneMetrics::occluded_missed), sum(os, &SceneMetrics::occluded_total),
                        sum(os, &SceneMetrics::visible_missed), sum(os, &SceneMetrics::visible_total),
                        sum(on, &SceneMetrics::occluded_missed), sum(on, &SceneMetrics::occluded_total),
                        sum(on, &SceneMetrics::visible_missed), sum(on, &SceneMetrics::visible_total)));
  verdict(os.failed == 0 && occ_fn <= 2.0 * vis_fn && occ_fn_off > occ_fn, "occlusion-handling",
          fmt("occluded FN rate %.3f vs visible %.3f (ratio %.2f, <= 2); block zeroed: occluded FN rate %.3f (must be higher)", occ_fn,
              vis_fn, vis_fn > 0 ? occ_fn / vis_fn : INFINITY, occ_fn_off));

  numerical_suite();

  // Session convergence over every default-configuration benchmark scene.
  int slow = 0, costly = 0, open = 0, max_rounds = 0, max_clicks = 0;
  for (const auto& m : all_default) {
    open += !(m.ok && m.converged);
    slow += m.rounds > 10;
    costly += m.clicks > 15;
    max_rounds = std::max(max_rounds, m.rounds);
    max_clicks = std::max(max_clicks, m.clicks);
  }
  verdict(open == 0 && slow == 0 && costly == 0, "session-convergence",
          fmt("%zu scenes: %d not converged, max rounds %d (<= 10), max clicks %d (<= 15)", all_default.size(), open, max_rounds,
              max_clicks));

  // Determinism: reports, logs and benchmark tables.
  {
    bool same = true;
    std::string detail;
    for (const Scenario* s : {&count_set, &dist_set, &occ_set}) {
      const ManifestEntry& e = s->entries.front();
      const GrayImage img = read_image(e.image);
      const GroundTruth truth = truth_from_json(nlohmann::json::parse(slurp(e.truth)));
      std::string reports[2], logs[2];
      for (int k = 0; k < 2; ++k) {
        PipelineConfig cfg = defaults;
        cfg.log_path = (root / (s->name + "_log" + std::to_string(k) + ".jsonl")).string();
        reports[k] = run_detect(img, truth.example_box, cfg, 7, &truth).report.dump();
        logs[k] = slurp(cfg.log_path);
      }
      same = same && reports[0] == reports[1] && logs[0] == logs[1] && !logs[0].empty();
    }
    std::vector<ManifestEntry> few(count_set.entries.begin(), count_set.entries.begin() + 3);
    const BenchmarkSummary again = run_benchmark(few, defaults, 1, 2);
    BenchmarkSummary first = cs;
    first.scenes.resize(3);
    first = summarize(first.scenes);
    same = same && metrics_csv(again) == metrics_csv(first) && metrics_json(again) == metrics_json(first);
    verdict(same, "determinism", same ? "repeated reports, session logs and metric tables are byte-identical" : "outputs differ between repeats");
  }

  if (ablation) {
    const int base_err = sum(ds, &SceneMetrics::false_positives) + sum(ds, &SceneMetrics::false_negatives);
    int worse = 0;
    for (int f = 0; f < kFeatureCount; ++f) {
      PipelineConfig cfg = defaults;
      cfg.disabled_features = {f};
      const BenchmarkSummary b = run(dist_set, cfg);
      const int err = sum(b, &SceneMetrics::false_positives) + sum(b, &SceneMetrics::false_negatives);
      worse += err > base_err;
      info("feature-ablation", fmt("without feature %d: %d errors (all features: %d)", f, err, base_err));
    }
    info("feature-ablation", fmt("%d of %d single-feature removals increase the distractor-benchmark error", worse, kFeatureCount));
  }

  fs::remove_all(root);
  std::printf("%s: %d criterion(s) failed\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
