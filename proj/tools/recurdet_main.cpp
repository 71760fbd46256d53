#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "recurdet/image_io.hpp"
#include "recurdet/pipeline.hpp"
#include "recurdet/service.hpp"
#include "recurdet/synth.hpp"

namespace {

using namespace recurdet;

BoundingBox parse_bbox(const std::string& text) {
  BoundingBox b;
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream in(text);
  if (!(in >> b.x >> c1 >> b.y >> c2 >> b.width >> c3 >> b.height) || c1 != ',' || c2 != ',' || c3 != ',' || !in.eof()) {
    throw Error(ErrorCode::kDegenerateBox, "bbox must be x,y,w,h");
  }
  return b;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kIo, path + ": " + e.what());
  }
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text(path, text);
  }
}

int fail(const Error& e) {
  std::cerr << error_report(e).dump() << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging_from_env();
  CLI::App app{"Counts repeating objects from one example box."};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  auto load = [&] { return config_path.empty() ? PipelineConfig{} : load_config(config_path); };

  auto* detect = app.add_subcommand("detect", "Detect and count objects in one image");
  std::string image_path, bbox_text, oracle_path, out_path, log_path;
  bool timings = false;
  detect->add_option("--image", image_path, "PNG or PGM image")->required()->check(CLI::ExistingFile);
  detect->add_option("--bbox", bbox_text, "Example object box x,y,w,h")->required();
  detect->add_option("--config", config_path, "Pipeline config JSON");
  detect->add_option("--seed", seed, "Run seed");
  detect->add_option("--oracle", oracle_path, "Ground-truth JSON answering the session queries");
  detect->add_option("--out", out_path, "Report path (stdout if omitted)");
  detect->add_option("--log", log_path, "Session log path (JSONL)");
  detect->add_flag("--timings", timings, "Include per-stage wall times in the report");

  auto* bench = app.add_subcommand("bench", "Score a manifest of generated scenes");
  std::string manifest_path, out_dir;
  int threads = 0;
  bench->add_option("--manifest", manifest_path, "manifest.json")->required()->check(CLI::ExistingFile);
  bench->add_option("--out", out_dir, "Output directory")->required();
  bench->add_option("--config", config_path, "Pipeline config JSON");
  bench->add_option("--seed", seed, "Run seed");
  bench->add_option("--threads", threads, "Worker threads (0: one per core)");

  auto* serve_cmd = app.add_subcommand("serve", "Run the labeling session service");
  int port = 8080;
  std::string host = "127.0.0.1";
  serve_cmd->add_option("--port", port, "TCP port");
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--config", config_path, "Pipeline config JSON");

  auto* synth = app.add_subcommand("synth", "Generate benchmark scenes and a manifest");
  std::string spec_path, synth_dir;
  int scenes = 1;
  std::uint64_t synth_seed = 0;
  synth->add_option("--spec", spec_path, "Scene spec JSON (defaults otherwise)");
  synth->add_option("--out", synth_dir, "Output directory")->required();
  synth->add_option("--scenes", scenes, "Number of scenes")->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", synth_seed, "Seed of the first scene");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*detect) {
      const PipelineConfig cfg = load();
      const GrayImage img = read_image(image_path);
      GroundTruth truth;
      const bool with_truth = !oracle_path.empty();
      if (with_truth) truth = truth_from_json(read_json(oracle_path));
      PipelineConfig run_cfg = cfg;
      if (!log_path.empty()) run_cfg.log_path = log_path;
      const DetectResult r = run_detect(img, parse_bbox(bbox_text), run_cfg, seed, with_truth ? &truth : nullptr, timings);
      emit(!out_path.empty() ? out_path : cfg.report_path, r.report.dump(2) + "\n");
      return 0;
    }
    if (*bench) {
      const PipelineConfig cfg = load();
      const BenchmarkSummary s = run_benchmark(read_manifest(manifest_path), cfg, seed, threads);
      std::filesystem::create_directories(out_dir);
      const auto dir = std::filesystem::path(out_dir);
      write_text((dir / "metrics.csv").string(), metrics_csv(s));
      write_text((dir / "metrics.json").string(), metrics_json(s).dump(2) + "\n");
      write_text((dir / "timings.csv").string(), timings_csv(s));
      std::cout << metrics_json(s)["aggregate"].dump() << '\n';
      return 0;
    }
    if (*serve_cmd) return serve(load(), host, port);
    if (*synth) {
      const SceneSpec spec = spec_path.empty() ? SceneSpec{} : spec_from_json(read_json(spec_path));
      SceneSpec base = spec;
      base.rng_seed = synth_seed;
      write_benchmark_scenes(base, scenes, synth_dir);
      return 0;
    }
  } catch (const Error& e) {
    return fail(e);
  }
  return 0;
}
