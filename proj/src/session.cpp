#include "recurdet/session.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace recurdet {
namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::vector<double> scores_of(const Separator& s, const Features& features) {
  std::vector<double> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(s.score(f));
  return out;
}

void require_phase(const SessionState& state, Phase phase) {
  if (state.phase != phase) {
    throw Error(ErrorCode::kWrongPhase, std::string("operation requires phase ") + std::string(phase_name(phase)) +
                                            ", session is " + std::string(phase_name(state.phase)));
  }
}

nlohmann::json ids_of(const QueryBatch& batch) {
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& e : batch.entries) ids.push_back(e.cluster);
  return ids;
}

}  // namespace

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::kSlider: return "slider";
    case Phase::kQuerying: return "querying";
    case Phase::kConverged: return "converged";
  }
  return "unknown";
}

std::string_view zone_name(Zone z) {
  switch (z) {
    case Zone::kNearPositive: return "near+";
    case Zone::kFarPositive: return "far+";
    case Zone::kNearNegative: return "near-";
    case Zone::kFarNegative: return "far-";
    case Zone::kSlider: return "slider";
  }
  return "unknown";
}

std::pair<double, double> bias_range(const Separator& s, const Features& features, double margin) {
  const auto sc = scores_of(s, features);
  const auto [lo, hi] = std::minmax_element(sc.begin(), sc.end());
  return {*lo - margin, *hi + margin};
}

SessionState init_session(const Features& features, const SessionConfig& cfg) {
  if (features.size() < 2) throw Error(ErrorCode::kTooFewClusters, "a session needs at least two clusters");
  SessionState s;
  s.separator.w.assign(kFeatureCount, 0.0);
  s.separator.w[kPatchCount] = 1.0;
  std::tie(s.b_min, s.b_max) = bias_range(s.separator, features, cfg.range_margin);
  s.separator.b = 0.5 * (s.b_min + s.b_max);
  s.phase = Phase::kSlider;
  return s;
}

QueryBatch slider_batch(const SessionState& state, const Features& features, const SessionConfig& cfg) {
  require_phase(state, Phase::kSlider);
  const auto sc = scores_of(state.separator, features);
  std::vector<int> order(features.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return sc[static_cast<std::size_t>(a)] < sc[static_cast<std::size_t>(b)]; });
  const int n = static_cast<int>(order.size());
  const int count = std::min(cfg.slider_size, n);
  QueryBatch batch;
  batch.round = state.round;
  for (int t = 0; t < count; ++t) {
    const int rank = count == 1 ? 0 : static_cast<int>(std::lround(static_cast<double>(t) * (n - 1) / (count - 1)));
    const int k = order[static_cast<std::size_t>(rank)];
    const double s = sc[static_cast<std::size_t>(k)];
    batch.entries.push_back({k, s, s - state.separator.b > 0.0, Zone::kSlider});
  }
  return batch;
}

SessionState set_bias(const SessionState& state, double b) {
  require_phase(state, Phase::kSlider);
  SessionState s = state;
  s.separator.b = std::clamp(b, s.b_min, s.b_max);
  const double delta = std::min(std::abs(s.separator.b - s.b_min), std::abs(s.separator.b - s.b_max));
  s.delta_plus = delta;
  s.delta_minus = delta;
  s.phase = Phase::kQuerying;
  return s;
}

QueryBatch next_query_batch(SessionState& state, const Features& features, std::uint64_t seed, const SessionConfig& cfg) {
  require_phase(state, Phase::kQuerying);
  const auto sc = scores_of(state.separator, features);
  const double b = state.separator.b;
  const double dp = state.delta_plus;
  const double dm = state.delta_minus;

  std::array<std::vector<int>, 4> zones;
  for (std::size_t k = 0; k < sc.size(); ++k) {
    if (state.user_labels.count(static_cast<int>(k)) != 0) continue;
    const double s = sc[k];
    const int id = static_cast<int>(k);
    if (s > b && s <= b + dp / 2) {
      zones[0].push_back(id);
    } else if (s > b + dp / 2 && s <= b + dp) {
      zones[1].push_back(id);
    } else if (s <= b && s >= b - dm / 2) {
      zones[2].push_back(id);
    } else if (s < b - dm / 2 && s >= b - dm) {
      zones[3].push_back(id);
    }
  }

  std::mt19937_64 rng(seed);
  const std::array<Zone, 4> kinds = {Zone::kNearPositive, Zone::kFarPositive, Zone::kNearNegative, Zone::kFarNegative};
  const std::array<int, 4> quota = {cfg.near_count, cfg.far_count, cfg.near_count, cfg.far_count};
  QueryBatch batch;
  batch.round = state.round;
  for (std::size_t z = 0; z < 4; ++z) {
    auto& pool = zones[z];
    const int take = std::min<int>(quota[z], static_cast<int>(pool.size()));
    for (int i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
      std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
      const int k = pool[static_cast<std::size_t>(i)];
      const double s = sc[static_cast<std::size_t>(k)];
      batch.entries.push_back({k, s, s - b > 0.0, kinds[z]});
    }
  }
  if (static_cast<int>(batch.entries.size()) < cfg.min_batch) {
    batch.entries.clear();
    batch.exhausted = true;
    state.phase = Phase::kConverged;
  }
  return batch;
}

RoundResult apply_corrections(const SessionState& state, const Features& features, const QueryBatch& batch,
                              const std::map<int, bool>& responses, const SessionConfig& cfg) {
  require_phase(state, Phase::kQuerying);
  if (responses.size() != batch.entries.size()) {
    throw Error(ErrorCode::kIncompleteResponse, "every entry of the batch needs a label");
  }
  RoundResult out;
  out.state = state;
  SessionState& s = out.state;
  int far_plus = 0;
  int far_minus = 0;
  bool far_plus_changed = false;
  bool far_minus_changed = false;
  for (const auto& e : batch.entries) {
    auto it = responses.find(e.cluster);
    if (it == responses.end()) throw Error(ErrorCode::kIncompleteResponse, "missing label for cluster " + std::to_string(e.cluster));
    const bool changed = it->second != e.predicted_positive;
    if (changed) out.corrections.push_back(e.cluster);
    if (e.zone == Zone::kFarPositive) {
      ++far_plus;
      far_plus_changed = far_plus_changed || changed;
    } else if (e.zone == Zone::kFarNegative) {
      ++far_minus;
      far_minus_changed = far_minus_changed || changed;
    }
    s.user_labels[e.cluster] = it->second;
  }

  const auto sc = scores_of(state.separator, features);
  const double b = state.separator.b;
  std::vector<std::vector<double>> points;
  std::vector<int> labels;
  for (std::size_t k = 0; k < features.size(); ++k) {
    int y = 0;
    if (auto it = s.user_labels.find(static_cast<int>(k)); it != s.user_labels.end()) {
      y = it->second ? 1 : -1;
    } else if (sc[k] > b + state.delta_plus) {
      y = 1;
    } else if (sc[k] < b - state.delta_minus) {
      y = -1;
    }
    if (y == 0) continue;
    points.emplace_back(features[k].begin(), features[k].end());
    labels.push_back(y);
  }
  try {
    s.separator = train_soft_svm(points, labels, SvmOptions{cfg.svm_c});
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kSingleClass) throw;
  }

  // A far zone with fewer than the full quota carries no evidence: shrink.
  const bool grow_plus = far_plus >= cfg.far_count && far_plus_changed;
  const bool grow_minus = far_minus >= cfg.far_count && far_minus_changed;
  s.delta_plus = grow_plus ? 2.0 * state.delta_plus : 0.5 * state.delta_plus;
  s.delta_minus = grow_minus ? 2.0 * state.delta_minus : 0.5 * state.delta_minus;

  auto [lo, hi] = bias_range(s.separator, features, cfg.range_margin);
  s.b_min = std::min(lo, s.separator.b);
  s.b_max = std::max(hi, s.separator.b);
  s.delta_plus = std::clamp(s.delta_plus, 0.0, s.b_max - s.separator.b);
  s.delta_minus = std::clamp(s.delta_minus, 0.0, s.separator.b - s.b_min);

  ++s.round;
  if (out.corrections.empty() || s.round >= cfg.max_rounds) s.phase = Phase::kConverged;
  return out;
}

Classification classify_all(const SessionState& state, const Features& features) {
  Classification c;
  for (std::size_t k = 0; k < features.size(); ++k) {
    const double v = state.separator.score(features[k]) - state.separator.b;
    bool pos = v > 0.0;
    if (auto it = state.user_labels.find(static_cast<int>(k)); it != state.user_labels.end()) pos = it->second;
    c.positive.push_back(pos);
    c.scores.push_back(v);
    c.count += pos;
  }
  return c;
}

ActiveSession::ActiveSession(Features features, SessionConfig cfg, std::uint64_t seed)
    : features_(std::move(features)), cfg_(cfg), seed_(seed), state_(init_session(features_, cfg_)) {}

const QueryBatch& ActiveSession::current_batch() {
  if (batch_) return *batch_;
  switch (state_.phase) {
    case Phase::kSlider:
      batch_ = slider_batch(state_, features_, cfg_);
      break;
    case Phase::kQuerying:
      batch_ = next_query_batch(state_, features_, mix_seed(seed_, static_cast<std::uint64_t>(state_.round)), cfg_);
      if (batch_->exhausted) log_.push_back({{"event", "exhausted"}, {"round", state_.round}});
      break;
    case Phase::kConverged:
      batch_ = QueryBatch{state_.round, {}, false};
      break;
  }
  return *batch_;
}

void ActiveSession::set_bias(double b) {
  require_phase(state_, Phase::kSlider);
  const QueryBatch slider = current_batch();
  state_ = recurdet::set_bias(state_, b);
  batch_.reset();
  log_.push_back({{"event", "bias"},
                  {"round", state_.round},
                  {"b", state_.separator.b},
                  {"b_min", state_.b_min},
                  {"b_max", state_.b_max},
                  {"delta_plus", state_.delta_plus},
                  {"delta_minus", state_.delta_minus},
                  {"batch", ids_of(slider)}});
}

RoundResult ActiveSession::submit_labels(const std::map<int, bool>& labels) {
  require_phase(state_, Phase::kQuerying);
  const QueryBatch batch = current_batch();
  if (batch.exhausted) require_phase(state_, Phase::kQuerying);
  RoundResult r = apply_corrections(state_, features_, batch, labels, cfg_);
  state_ = r.state;
  batch_.reset();
  clicks_ += static_cast<int>(r.corrections.size());
  log_.push_back({{"event", "round"},
                  {"round", batch.round},
                  {"w", state_.separator.w},
                  {"b", state_.separator.b},
                  {"delta_plus", state_.delta_plus},
                  {"delta_minus", state_.delta_minus},
                  {"batch", ids_of(batch)},
                  {"corrections", r.corrections},
                  {"converged", state_.phase == Phase::kConverged}});
  return r;
}

std::string ActiveSession::log_jsonl() const {
  std::string out;
  for (const auto& rec : log_) {
    out += rec.dump();
    out += '\n';
  }
  return out;
}

double oracle_bias(const QueryBatch& slider, const std::vector<bool>& truth, const SessionState& state) {
  std::vector<double> sc;
  for (const auto& e : slider.entries) sc.push_back(e.score);
  std::sort(sc.begin(), sc.end());
  std::vector<double> candidates{state.b_min};
  for (std::size_t i = 1; i < sc.size(); ++i) {
    if (sc[i] > sc[i - 1]) candidates.push_back(0.5 * (sc[i] + sc[i - 1]));
  }
  candidates.push_back(state.b_max);

  int best_err = static_cast<int>(slider.entries.size()) + 1;
  std::vector<double> ties;
  for (double b : candidates) {
    int err = 0;
    for (const auto& e : slider.entries) err += (e.score - b > 0.0) != truth[static_cast<std::size_t>(e.cluster)];
    if (err < best_err) {
      best_err = err;
      ties = {b};
    } else if (err == best_err) {
      ties.push_back(b);
    }
  }
  return ties[ties.size() / 2];
}

OracleOutcome run_oracle_session(ActiveSession& session, const std::vector<bool>& truth) {
  while (session.state().phase != Phase::kConverged) {
    const QueryBatch& batch = session.current_batch();
    if (session.state().phase == Phase::kSlider) {
      session.set_bias(oracle_bias(batch, truth, session.state()));
      continue;
    }
    if (batch.exhausted || batch.entries.empty()) break;
    std::map<int, bool> answers;
    for (const auto& e : batch.entries) answers[e.cluster] = truth[static_cast<std::size_t>(e.cluster)];
    session.submit_labels(answers);
  }
  return {session.state().round, session.clicks(), session.state().phase == Phase::kConverged};
}

}  // namespace recurdet
