#pragma once

#include <json.hpp>

#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>

#include "recurdet/pipeline.hpp"

namespace httplib {
class Server;
}

namespace recurdet {

/// In-memory sessions behind the JSON-over-HTTP interface:
///   POST /sessions, PUT /sessions/{id}/bias, GET /sessions/{id}/batch,
///   POST /sessions/{id}/labels, GET /sessions/{id}/result,
///   GET /sessions/{id}/log, GET /healthz.
class SessionService {
 public:
  explicit SessionService(PipelineConfig cfg = {});
  ~SessionService();

  void register_routes(httplib::Server& server);
  std::size_t session_count() const;

 private:
  struct Slot;
  std::shared_ptr<Slot> find(const std::string& id) const;

  PipelineConfig cfg_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::uint64_t next_id_ = 0;
  std::uint64_t id_salt_ = 0;
};

/// Serves until the process is interrupted; returns non-zero if binding fails.
int serve(const PipelineConfig& cfg, const std::string& host, int port);

}  // namespace recurdet
