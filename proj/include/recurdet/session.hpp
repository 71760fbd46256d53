#pragma once

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "recurdet/features.hpp"
#include "recurdet/svm.hpp"

namespace recurdet {

enum class Phase { kSlider, kQuerying, kConverged };
enum class Zone { kNearPositive, kFarPositive, kNearNegative, kFarNegative, kSlider };

std::string_view phase_name(Phase p);
std::string_view zone_name(Zone z);

struct SessionConfig {
  double svm_c = 10.0;
  int slider_size = 20;
  int near_count = 7;
  int far_count = 3;
  int min_batch = 4;
  int max_rounds = 25;
  double range_margin = 1e-6;
};

struct SessionState {
  Separator separator;
  double b_min = 0.0;
  double b_max = 0.0;
  double delta_plus = 0.0;
  double delta_minus = 0.0;
  std::map<int, bool> user_labels;  // cluster index -> positive
  int round = 0;
  Phase phase = Phase::kSlider;
};

struct QueryEntry {
  int cluster = 0;
  double score = 0.0;  // <f, w>
  bool predicted_positive = false;
  Zone zone = Zone::kSlider;
};

struct QueryBatch {
  int round = 0;
  std::vector<QueryEntry> entries;
  /// Fewer than `min_batch` clusters were available; the session converged.
  bool exhausted = false;
};

using Features = std::vector<FeatureVector>;

/// w = (1, 0, ...), b spanning all-positive to all-negative, phase slider.
SessionState init_session(const Features& features, const SessionConfig& cfg = {});

/// Clusters at evenly spaced score ranks across the range.
QueryBatch slider_batch(const SessionState& state, const Features& features, const SessionConfig& cfg = {});

/// Records the slider choice and sets both margins to the distance to the nearer range end.
SessionState set_bias(const SessionState& state, double b);

/// Seven near and three far clusters on each side of b, sampled without
/// replacement among clusters the user has not labeled. Marks the state
/// converged when fewer than `min_batch` entries can be found.
QueryBatch next_query_batch(SessionState& state, const Features& features, std::uint64_t seed,
                            const SessionConfig& cfg = {});

struct RoundResult {
  SessionState state;
  std::vector<int> corrections;  // cluster indices whose label the user changed
};

/// Retrains on the answered batch, all accumulated user labels, and the
/// confident clusters outside [b - delta-, b + delta+]; then adapts the margins.
RoundResult apply_corrections(const SessionState& state, const Features& features, const QueryBatch& batch,
                              const std::map<int, bool>& responses, const SessionConfig& cfg = {});

struct Classification {
  std::vector<bool> positive;
  std::vector<double> scores;  // <f, w> - b
  int count = 0;
};

/// sign(<f, w> - b), with explicit user labels taking precedence.
Classification classify_all(const SessionState& state, const Features& features);

/// Bias range [min score - margin, max score + margin] under the current w.
std::pair<double, double> bias_range(const Separator& s, const Features& features, double margin);

/// Drives one classifier session and keeps an audit log; used by both the
/// oracle loop and the HTTP service so their logs are identical.
class ActiveSession {
 public:
  ActiveSession(Features features, SessionConfig cfg, std::uint64_t seed);

  const SessionState& state() const { return state_; }
  const Features& features() const { return features_; }
  const SessionConfig& config() const { return cfg_; }

  /// The pending batch: score-spread clusters in the slider phase, the
  /// round's query batch afterwards (stable until labels are submitted),
  /// empty once converged.
  const QueryBatch& current_batch();
  void set_bias(double b);
  RoundResult submit_labels(const std::map<int, bool>& labels);
  Classification result() const { return classify_all(state_, features_); }

  int clicks() const { return clicks_; }
  const std::vector<nlohmann::json>& log() const { return log_; }
  std::string log_jsonl() const;

 private:
  Features features_;
  SessionConfig cfg_;
  std::uint64_t seed_;
  SessionState state_;
  std::optional<QueryBatch> batch_;
  std::vector<nlohmann::json> log_;
  int clicks_ = 0;
};

/// The bias that best reproduces `truth` on the slider batch.
double oracle_bias(const QueryBatch& slider, const std::vector<bool>& truth, const SessionState& state);

struct OracleOutcome {
  int rounds = 0;
  int clicks = 0;
  bool converged = false;
};

/// Answers every query from `truth` (indexed by cluster) until convergence.
OracleOutcome run_oracle_session(ActiveSession& session, const std::vector<bool>& truth);

}  // namespace recurdet
