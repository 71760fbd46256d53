#include "recurdet/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "recurdet/image_io.hpp"

namespace recurdet {

struct SessionService::Slot {
  std::mutex mu;
  std::string id;
  Analysis analysis;
  std::unique_ptr<ActiveSession> session;
  int crop_side = 27;
};

namespace {

using Json = nlohmann::json;

void reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& error, const std::string& message) {
  reply(res, status, {{"error", error}, {"message", message}});
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kWrongPhase: return 409;
    case ErrorCode::kIncompleteResponse: return 400;
    default: return 422;
  }
}

std::vector<std::uint8_t> crop_png(const GrayImage& img, Vec2 center, int side) {
  GrayImage crop(side, side, 0.0);
  const int x0 = static_cast<int>(std::lround(center.x)) - side / 2;
  const int y0 = static_cast<int>(std::lround(center.y)) - side / 2;
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      if (img.contains(x0 + x, y0 + y)) crop(x, y) = img(x0 + x, y0 + y);
    }
  }
  return encode_png(crop);
}

BoundingBox parse_bbox(const Json& j) {
  auto fail = [] { throw std::invalid_argument("bbox must be [x, y, width, height] with positive size"); };
  BoundingBox b;
  if (j.is_array() && j.size() == 4 && std::all_of(j.begin(), j.end(), [](const Json& v) { return v.is_number_integer(); })) {
    b = {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
  } else if (j.is_object() && j.contains("x") && j.contains("y") && j.contains("width") && j.contains("height")) {
    for (const char* k : {"x", "y", "width", "height"}) {
      if (!j.at(k).is_number_integer()) fail();
    }
    b = {j.at("x").get<int>(), j.at("y").get<int>(), j.at("width").get<int>(), j.at("height").get<int>()};
  } else {
    fail();
  }
  if (b.width <= 0 || b.height <= 0 || b.x < 0 || b.y < 0) fail();
  return b;
}

}  // namespace

SessionService::SessionService(PipelineConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  id_salt_ = std::random_device{}();
}

SessionService::~SessionService() = default;

std::size_t SessionService::session_count() const {
  std::shared_lock lock(mu_);
  return sessions_.size();
}

std::shared_ptr<SessionService::Slot> SessionService::find(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void SessionService::register_routes(httplib::Server& server) {
  auto batch_json = [](Slot& s) {
    const QueryBatch& batch = s.session->current_batch();
    Json entries = Json::array();
    for (const auto& e : batch.entries) {
      const Vec2 c = s.analysis.centers[static_cast<std::size_t>(e.cluster)];
      entries.push_back({{"cluster", e.cluster},
                         {"x", c.x},
                         {"y", c.y},
                         {"score", e.score},
                         {"predicted", e.predicted_positive},
                         {"zone", std::string(zone_name(e.zone))},
                         {"crop", base64_encode(crop_png(s.analysis.image, c, s.crop_side))}});
    }
    const auto& st = s.session->state();
    return Json{{"round", batch.round},
                {"phase", std::string(phase_name(st.phase))},
                {"exhausted", batch.exhausted},
                {"b", st.separator.b},
                {"b_min", st.b_min},
                {"b_max", st.b_max},
                {"entries", std::move(entries)}};
  };

  // Looks up the session, serializes on its mutex and maps library errors to statuses.
  auto with_slot = [this](const httplib::Request& req, httplib::Response& res, auto&& fn) {
    auto slot = find(req.matches[1]);
    if (!slot) return reply_error(res, 404, "UnknownSession", "no session " + std::string(req.matches[1]));
    std::lock_guard lock(slot->mu);
    try {
      fn(*slot);
    } catch (const Error& e) {
      reply_error(res, status_for(e.code()), std::string(error_name(e.code())), e.what());
    } catch (const Json::exception& e) {
      reply_error(res, 400, "BadRequest", e.what());
    }
  };

  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"status", "ok"}}); });

  server.Post("/sessions", [this, batch_json](const httplib::Request& req, httplib::Response& res) {
    Json body;
    BoundingBox bbox;
    GrayImage img;
    std::uint64_t seed = 0;
    try {
      body = Json::parse(req.body);
      bbox = parse_bbox(body.at("bbox"));
      seed = body.value("seed", std::uint64_t{0});
      img = decode_image(base64_decode(body.at("image").get<std::string>()));
    } catch (const Json::exception& e) {
      return reply_error(res, 400, "BadRequest", e.what());
    } catch (const std::invalid_argument& e) {
      return reply_error(res, 400, "BadRequest", e.what());
    } catch (const Error& e) {
      return reply_error(res, 400, std::string(error_name(e.code())), e.what());
    }

    auto slot = std::make_shared<Slot>();
    try {
      slot->analysis = analyze(img, bbox, cfg_, seed);
      try {
        slot->session = make_session(slot->analysis, cfg_, seed);
      } catch (const Error& e) {
        throw StageError("classifier", e);
      }
    } catch (const Error& e) {
      return reply(res, 422, error_report(e));
    }
    slot->crop_side = std::max(1, static_cast<int>(std::lround(cfg_.mining.object_size() / slot->analysis.canonical.scale)));
    {
      std::unique_lock lock(mu_);
      char buf[40];
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(stage_seed(id_salt_, ++next_id_)));
      slot->id = buf;
      sessions_[slot->id] = slot;
    }
    std::lock_guard lock(slot->mu);
    spdlog::info("session {} created with {} clusters", slot->id, slot->analysis.clusters.size());
    reply(res, 201, {{"session_id", slot->id},
                     {"n_clusters", slot->analysis.clusters.size()},
                     {"width", img.width()},
                     {"height", img.height()},
                     {"batch", batch_json(*slot)}});
  });

  server.Put(R"(/sessions/([0-9a-f]+)/bias)", [with_slot](const httplib::Request& req, httplib::Response& res) {
    with_slot(req, res, [&](Slot& s) {
      const Json body = Json::parse(req.body);
      const Json& b = body.at("b");
      if (!b.is_number()) return reply_error(res, 400, "BadRequest", "b must be a number");
      s.session->set_bias(b.get<double>());
      const auto& st = s.session->state();
      reply(res, 200, {{"phase", std::string(phase_name(st.phase))},
                       {"b", st.separator.b},
                       {"b_min", st.b_min},
                       {"b_max", st.b_max},
                       {"delta_plus", st.delta_plus},
                       {"delta_minus", st.delta_minus}});
    });
  });

  server.Get(R"(/sessions/([0-9a-f]+)/batch)", [with_slot, batch_json](const httplib::Request& req, httplib::Response& res) {
    with_slot(req, res, [&](Slot& s) { reply(res, 200, batch_json(s)); });
  });

  server.Post(R"(/sessions/([0-9a-f]+)/labels)", [with_slot](const httplib::Request& req, httplib::Response& res) {
    with_slot(req, res, [&](Slot& s) {
      const Json body = Json::parse(req.body);
      if (s.session->state().phase != Phase::kQuerying) {
        return reply_error(res, 409, "WrongPhase", "session is " + std::string(phase_name(s.session->state().phase)));
      }
      // A stale round means another client already answered this batch.
      if (body.contains("round") && body.at("round").get<int>() != s.session->state().round) {
        return reply_error(res, 409, "WrongPhase", "labels are for a different round");
      }
      std::map<int, bool> labels;
      for (const auto& [k, v] : body.at("labels").items()) {
        std::size_t used = 0;
        int id = -1;
        try {
          id = std::stoi(k, &used);
        } catch (const std::exception&) {
        }
        if (used != k.size() || !v.is_boolean()) return reply_error(res, 400, "BadRequest", "labels map cluster ids to booleans");
        labels[id] = v.get<bool>();
      }
      const RoundResult r = s.session->submit_labels(labels);
      const auto& st = s.session->state();
      reply(res, 200, {{"round", st.round},
                       {"phase", std::string(phase_name(st.phase))},
                       {"converged", st.phase == Phase::kConverged},
                       {"corrections", r.corrections},
                       {"count", s.session->result().count}});
    });
  });

  server.Get(R"(/sessions/([0-9a-f]+)/result)", [with_slot](const httplib::Request& req, httplib::Response& res) {
    with_slot(req, res, [&](Slot& s) {
      const Classification c = s.session->result();
      Json dets = Json::array();
      for (std::size_t k = 0; k < c.positive.size(); ++k) {
        dets.push_back({{"cluster", k},
                        {"x", s.analysis.centers[k].x},
                        {"y", s.analysis.centers[k].y},
                        {"score", c.scores[k]},
                        {"positive", static_cast<bool>(c.positive[k])}});
      }
      const auto& st = s.session->state();
      reply(res, 200, {{"count", c.count},
                       {"converged", st.phase == Phase::kConverged},
                       {"phase", std::string(phase_name(st.phase))},
                       {"round", st.round},
                       {"clicks", s.session->clicks()},
                       {"detections", std::move(dets)}});
    });
  });

  server.Get(R"(/sessions/([0-9a-f]+)/log)", [with_slot](const httplib::Request& req, httplib::Response& res) {
    with_slot(req, res, [&](Slot& s) {
      res.status = 200;
      res.set_content(s.session->log_jsonl(), "application/x-ndjson");
    });
  });
}

int serve(const PipelineConfig& cfg, const std::string& host, int port) {
  SessionService service(cfg);
  httplib::Server server;
  server.set_payload_max_length(64u << 20);
  service.register_routes(server);
  spdlog::info("listening on {}:{}", host, port);
  if (!server.listen(host, port)) {
    spdlog::error("cannot listen on {}:{}", host, port);
    return 1;
  }
  return 0;
}

}  // namespace recurdet
