#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>
#include <sstream>

#include "recurdet/image_io.hpp"
#include "recurdet/pipeline.hpp"

using namespace recurdet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("recurdet_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RECURDET_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

SceneSpec small_scene(std::uint64_t seed) {
  SceneSpec spec;
  spec.width = 200;
  spec.height = 200;
  spec.count = 25;
  spec.jitter = 2;
  spec.rng_seed = seed;
  return spec;
}

}  // namespace

TEST_SUITE("pipeline_cli") {

TEST_CASE("config json") {
  PipelineConfig c;
  c.sigma_ransac = 18;
  c.disabled_features = {6, 7, 8};
  c.session.svm_c = 3.0;
  const PipelineConfig back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(c.ransac_sigma() == 18.0);
  CHECK(PipelineConfig{}.ransac_sigma() == 20.0);
  CHECK(PipelineConfig{}.lag_limit() == 54);

  CHECK_THROWS_AS(config_from_json({{"sigma", 3}}), Error);
  CHECK_THROWS_AS(config_from_json({{"epsilon", "small"}}), Error);
  CHECK_THROWS_AS(config_from_json({{"disabled_features", {18}}}), Error);
  CHECK_THROWS_AS(config_from_json({{"sigma_ransac", -1}}), Error);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::array()), Error);
  CHECK(config_from_json({{"ratio_threshold", 3.0}}).ratio_threshold == 3.0);
}

TEST_CASE("stage seeds differ") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 4; ++s)
    for (std::uint64_t st = 0; st < 8; ++st) seen.insert(stage_seed(s, st));
  CHECK(seen.size() == 32);
  CHECK(stage_seed(5, 2) == stage_seed(5, 2));
}

TEST_CASE("25-object scene with oracle") {
  const Scene scene = generate(small_scene(100));
  const DetectResult r = run_detect(scene.image, scene.truth.example_box, {}, 1, &scene.truth);
  CHECK(std::abs(r.classification.count - 25) <= 1);
  REQUIRE(r.oracle);
  CHECK(r.oracle->converged);
  CHECK(r.report["count"] == r.classification.count);
  CHECK(r.report["detections"].size() == r.analysis.clusters.size());
  CHECK_FALSE(r.report.contains("timings_ms"));

  std::vector<Vec2> found;
  for (std::size_t k = 0; k < r.analysis.centers.size(); ++k)
    if (r.classification.positive[k]) found.push_back(r.analysis.centers[k]);
  CHECK(score_detections(found, scene.truth, 13.5).f1 >= 0.9);
}

TEST_CASE("detections map back to the original scale") {
  const Scene scene = generate(small_scene(101));
  const GrayImage big = resize_bilinear(scene.image, 400, 400);
  GroundTruth truth = scene.truth;
  truth.width = truth.height = 400;
  truth.object_size = 54;
  for (auto& o : truth.objects) o.center = o.center * 2.0 + Vec2(0.5, 0.5);
  const BoundingBox b = scene.truth.example_box;
  const DetectResult r = run_detect(big, {2 * b.x, 2 * b.y, 54, 54}, {}, 1, &truth, true);
  CHECK(r.analysis.canonical.scale == doctest::Approx(0.5));
  CHECK(r.report.contains("timings_ms"));
  std::vector<Vec2> found;
  for (std::size_t k = 0; k < r.analysis.centers.size(); ++k)
    if (r.classification.positive[k]) found.push_back(r.analysis.centers[k]);
  const DetectionScore s = score_detections(found, truth, 27.0);
  CHECK(std::abs(r.classification.count - 25) <= 1);
  CHECK(s.f1 >= 0.9);
}

TEST_CASE("stage errors carry the stage name") {
  try {
    run_detect(GrayImage(120, 120, 0.5), {10, 10, 27, 27}, {}, 0);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.code() == ErrorCode::kNoRecurrence);
    CHECK(e.stage() == "mining");
    const auto j = error_report(e);
    CHECK(j["error"] == "NoRecurrence");
    CHECK(j["stage"] == "mining");
  }
  CHECK_THROWS_AS(run_detect(GrayImage(120, 120, 0.5), {100, 100, 40, 40}, {}, 0), Error);
}

TEST_CASE("runs repeat byte for byte") {
  const Scene scene = generate(small_scene(102));
  const fs::path dir = scratch("det");
  PipelineConfig cfg;
  cfg.log_path = (dir / "a.jsonl").string();
  const DetectResult a = run_detect(scene.image, scene.truth.example_box, cfg, 7, &scene.truth);
  cfg.log_path = (dir / "b.jsonl").string();
  const DetectResult b = run_detect(scene.image, scene.truth.example_box, cfg, 7, &scene.truth);
  CHECK(a.report.dump() == b.report.dump());
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  CHECK_FALSE(slurp(dir / "a.jsonl").empty());
  fs::remove_all(dir);
}

TEST_CASE("summary arithmetic") {
  std::vector<SceneMetrics> perfect(10);
  for (auto& m : perfect) m.ok = true, m.f1 = 1.0;
  const BenchmarkSummary p = summarize(perfect);
  CHECK(p.mean_abs_error == 0.0);
  CHECK(p.std_abs_error == 0.0);

  std::vector<SceneMetrics> mixed(5);
  const int errs[] = {2, -1, 0, 4, -3};
  for (int i = 0; i < 5; ++i) mixed[static_cast<std::size_t>(i)].ok = true, mixed[static_cast<std::size_t>(i)].count_error = errs[i];
  mixed.push_back({});  // failed scene
  const BenchmarkSummary s = summarize(mixed);
  CHECK(s.failed == 1);
  CHECK(s.mean_abs_error == doctest::Approx(2.0));
  CHECK(s.std_abs_error == doctest::Approx(std::sqrt((0 + 1 + 4 + 4 + 1) / 5.0)));

  const BenchmarkSummary none = summarize({});
  CHECK(none.scenes.empty());
  CHECK(metrics_csv(none).find('\n') == metrics_csv(none).size() - 1);
}

TEST_CASE("benchmark over written scenes") {
  const fs::path dir = scratch("bench");
  SceneSpec base = small_scene(200);
  const auto entries = write_benchmark_scenes(base, 2, dir.string());
  REQUIRE(entries.size() == 2);
  const auto manifest = read_manifest((dir / "manifest.json").string());
  REQUIRE(manifest.size() == 2);
  CHECK(manifest[1].image == entries[1].image);

  auto scenes = manifest;
  scenes.push_back({"missing", (dir / "nope.png").string(), (dir / "nope.json").string()});
  const BenchmarkSummary a = run_benchmark(scenes, {}, 3, 1);
  REQUIRE(a.scenes.size() == 3);
  CHECK(a.failed == 1);
  CHECK(a.scenes[2].error == "Io");
  for (int i = 0; i < 2; ++i) {
    CHECK(a.scenes[static_cast<std::size_t>(i)].ok);
    CHECK(a.scenes[static_cast<std::size_t>(i)].truth_count == 25);
  }
  double hand = 0.0;
  for (int i = 0; i < 2; ++i) hand += std::abs(a.scenes[static_cast<std::size_t>(i)].count_error);
  CHECK(a.mean_abs_error == doctest::Approx(hand / 2));

  const BenchmarkSummary b = run_benchmark(scenes, {}, 3, 2);
  CHECK(metrics_csv(a) == metrics_csv(b));
  CHECK(metrics_json(a) == metrics_json(b));
  fs::remove_all(dir);
}

TEST_CASE("command line") {
  const fs::path dir = scratch("cli");
  write_png(GrayImage(80, 80, 0.5), (dir / "flat.png").string());
  CHECK(run_cli("detect --image " + (dir / "flat.png").string() + " --bbox 10,10,27,27") == 2);
  CHECK(run_cli("detect --image " + (dir / "flat.png").string() + " --bbox 10,10") == 2);
  CHECK(run_cli("detect --image " + (dir / "missing.png").string() + " --bbox 10,10,27,27") != 0);

  std::ofstream(dir / "empty.json") << R"({"scenes": []})";
  CHECK(run_cli("bench --manifest " + (dir / "empty.json").string() + " --out " + (dir / "empty_out").string()) == 0);
  CHECK(slurp(dir / "empty_out" / "metrics.csv").find('\n') == slurp(dir / "empty_out" / "metrics.csv").size() - 1);

  const Scene scene = generate(small_scene(103));
  write_scene(scene, (dir / "s").string());
  const BoundingBox b = scene.truth.example_box;
  const std::string bbox = std::to_string(b.x) + "," + std::to_string(b.y) + "," + std::to_string(b.width) + "," + std::to_string(b.height);
  const std::string args = "detect --image " + (dir / "s.png").string() + " --bbox " + bbox + " --oracle " +
                           (dir / "s.json").string() + " --seed 4 --out ";
  REQUIRE(run_cli(args + (dir / "r1.json").string()) == 0);
  REQUIRE(run_cli(args + (dir / "r2.json").string()) == 0);
  CHECK(slurp(dir / "r1.json") == slurp(dir / "r2.json"));
  const auto report = nlohmann::json::parse(slurp(dir / "r1.json"));
  CHECK(std::abs(report["count"].get<int>() - 25) <= 1);

  std::ofstream(dir / "bad.json") << R"({"colour": 1})";
  CHECK(run_cli("detect --config " + (dir / "bad.json").string() + " --image " + (dir / "s.png").string() + " --bbox " + bbox) == 2);
  fs::remove_all(dir);
}

}  // TEST_SUITE
