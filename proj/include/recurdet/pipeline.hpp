#pragma once

#include <json.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "recurdet/detection.hpp"
#include "recurdet/features.hpp"
#include "recurdet/patch_mining.hpp"
#include "recurdet/session.hpp"
#include "recurdet/structure.hpp"
#include "recurdet/synth.hpp"

namespace recurdet {

struct PipelineConfig {
  MiningConfig mining;
  double ratio_threshold = 2.0;
  double eccentricity_gate = 2.0;
  int max_lag = 0;  // 0: twice the object size
  double sigma_ransac = 0.0;  // 0: ceil(0.74 * object size), which is 20 at the canonical size
  int min_support = 2;
  int bins = 8;
  SessionConfig session;
  bool oracle = true;  // drive the session from ground truth when it is supplied
  std::vector<int> disabled_features;  // columns zeroed after normalization
  std::string report_path;
  std::string log_path;
  std::string features_path;
  std::string model_path;

  void validate() const;
  int lag_limit() const { return max_lag > 0 ? max_lag : 2 * mining.object_size(); }
  double ransac_sigma() const;
};

/// Rejects unknown keys; missing keys keep their defaults.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& c);
PipelineConfig load_config(const std::string& path);

/// Independent per-stage seeds from one run seed.
std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage);

/// Everything the pipeline derives from one image before the session starts.
struct Analysis {
  GrayImage image;
  RescaledImage canonical;
  std::vector<RecurrentPatch> patches;
  std::vector<int> edge_corrected;  // patch ids whose occurrences were replaced
  PatchGraph graph;
  EmbeddedModel model;
  std::vector<Vote> votes;
  std::vector<Cluster> clusters;
  std::vector<FeatureVector> raw_features;
  std::vector<FeatureVector> features;  // normalized, with disabled columns zeroed
  FeatureScaling scaling;
  std::vector<Vec2> centers;  // cluster centers in original image coordinates
  std::vector<std::pair<std::string, double>> timings_ms;
};

/// Runs mining through feature extraction. Failures are rethrown as
/// StageError carrying the stage name.
Analysis analyze(const GrayImage& image, const BoundingBox& bbox, const PipelineConfig& cfg, std::uint64_t seed);

/// Positive iff the cluster is the one-to-one distance-greedy match of a target within `tol`.
std::vector<bool> oracle_labels(const std::vector<Vec2>& centers, const GroundTruth& truth, double tol);

/// The classifier session for an analysis, seeded exactly as `run_detect` seeds it.
std::unique_ptr<ActiveSession> make_session(const Analysis& a, const PipelineConfig& cfg, std::uint64_t seed);

struct DetectResult {
  Analysis analysis;
  std::unique_ptr<ActiveSession> session;
  Classification classification;
  std::optional<OracleOutcome> oracle;
  nlohmann::json report;
};

/// Full run: analysis, then an oracle-driven session when `truth` is given,
/// else the initial separator with the bias at the middle of its range.
DetectResult run_detect(const GrayImage& image, const BoundingBox& bbox, const PipelineConfig& cfg, std::uint64_t seed,
                        const GroundTruth* truth = nullptr, bool timings = false);

/// JSON report for a stage failure: {"error": name, "stage": stage, "message": ...}.
nlohmann::json error_report(const Error& e);

struct SceneMetrics {
  std::string name;
  bool ok = false;
  std::string error;
  std::string stage;
  int truth_count = 0;
  int count = 0;
  int count_error = 0;
  int false_positives = 0;
  int false_negatives = 0;
  double f1 = 0.0;
  int distractor_hits = 0;
  int occluded_total = 0;
  int occluded_missed = 0;
  int visible_total = 0;
  int visible_missed = 0;
  int clusters = 0;
  int rounds = 0;
  int clicks = 0;
  bool converged = false;
  double wall_ms = 0.0;
};

struct BenchmarkSummary {
  std::vector<SceneMetrics> scenes;
  int failed = 0;
  double mean_abs_error = 0.0;
  double std_abs_error = 0.0;
  double mean_h1 = 0.0;
  double mean_h0 = 0.0;
  double mean_f1 = 0.0;
};

struct ManifestEntry {
  std::string name;
  std::string image;  // resolved paths
  std::string truth;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);

/// Scores one scene; failures are recorded in the metrics, never thrown.
SceneMetrics run_scene(const ManifestEntry& entry, const PipelineConfig& cfg, std::uint64_t seed);

BenchmarkSummary run_benchmark(const std::vector<ManifestEntry>& scenes, const PipelineConfig& cfg, std::uint64_t seed,
                               int threads = 0);
BenchmarkSummary summarize(std::vector<SceneMetrics> scenes);

/// Deterministic tables (wall time excluded) and a separate timing table.
std::string metrics_csv(const BenchmarkSummary& s);
nlohmann::json metrics_json(const BenchmarkSummary& s);
std::string timings_csv(const BenchmarkSummary& s);

/// Writes the scenes and a manifest.json into `dir`; scene i uses seed base.rng_seed + i.
std::vector<ManifestEntry> write_benchmark_scenes(const SceneSpec& base, int scenes, const std::string& dir);

/// Applies RECURDET_LOG (trace, debug, info, warn, error, off); defaults to warn.
void configure_logging_from_env();

}  // namespace recurdet
