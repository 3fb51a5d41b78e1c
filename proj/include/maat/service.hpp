#pragma once

#include "maat/checkpoint.hpp"
#include "maat/engine.hpp"
#include "maat/importance.hpp"
#include "maat/strategy.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace maat {

/// Persistence for live sessions: one JSON document per session id.
class SessionStore {
public:
  virtual ~SessionStore() = default;
  virtual void put(const std::string& id, const nlohmann::json& doc, std::int64_t last_active) = 0;
  virtual std::optional<nlohmann::json> get(const std::string& id) = 0;
  virtual void erase(const std::string& id) = 0;
  /// Every stored (id, document) pair, ordered by id.
  virtual std::vector<std::pair<std::string, nlohmann::json>> all() = 0;
  /// Drops sessions last active before `cutoff`; returns how many.
  virtual std::size_t purge_before(std::int64_t cutoff) = 0;
};

class MemorySessionStore final : public SessionStore {
public:
  void put(const std::string& id, const nlohmann::json& doc, std::int64_t last_active) override;
  std::optional<nlohmann::json> get(const std::string& id) override;
  void erase(const std::string& id) override;
  std::vector<std::pair<std::string, nlohmann::json>> all() override;
  std::size_t purge_before(std::int64_t cutoff) override;

private:
  std::mutex mutex_;
  std::map<std::string, std::pair<nlohmann::json, std::int64_t>> items_;
};

/// Key-value table in an SQLite file.
class SqliteSessionStore final : public SessionStore {
public:
  explicit SqliteSessionStore(const std::filesystem::path& path);
  ~SqliteSessionStore() override;
  SqliteSessionStore(const SqliteSessionStore&) = delete;
  SqliteSessionStore& operator=(const SqliteSessionStore&) = delete;

  void put(const std::string& id, const nlohmann::json& doc, std::int64_t last_active) override;
  std::optional<nlohmann::json> get(const std::string& id) override;
  void erase(const std::string& id) override;
  std::vector<std::pair<std::string, nlohmann::json>> all() override;
  std::size_t purge_before(std::int64_t cutoff) override;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ServiceOptions {
  std::size_t default_test_length = 50;
  std::size_t default_k_c = 10;
  std::uint64_t default_seed = 42;
  UpdateConfig update;
  StrategyOptions strategy_options;
  std::int64_t ttl_seconds = 24 * 3600;
  std::size_t max_test_length = 10000;
  /// Seconds since the epoch; replaceable for tests.
  std::function<std::int64_t()> clock;
};

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

/// Live adaptive-test sessions behind a JSON request/response interface.
/// Requests for different sessions run concurrently; requests for the same
/// session are serialized.
class Service {
public:
  explicit Service(ServiceOptions options = {}, std::shared_ptr<SessionStore> store = nullptr);

  /// Registers a pretrained model; one per kind. All models must share the
  /// concept graph size of the importance table.
  void add_model(Checkpoint checkpoint);
  void set_importance(ImportanceTable table);
  bool ready() const;

  /// Reloads sessions from the store (dropping expired ones); returns how
  /// many became live.
  std::size_t resume();

  /// Routes: POST /sessions, POST /sessions/{id}/answers,
  /// GET /sessions/{id}/diagnosis, GET /healthz.
  HttpResponse handle(std::string_view method, std::string_view path, std::string_view body);

  HttpResponse start_session(const nlohmann::json& request);
  HttpResponse submit_answer(const std::string& id, const nlohmann::json& request);
  HttpResponse get_diagnosis(const std::string& id);
  HttpResponse healthz() const;

private:
  struct Live;
  struct Entry;

  std::shared_ptr<Entry> find(const std::string& id);
  std::unique_ptr<Live> rebuild(const nlohmann::json& doc) const;
  nlohmann::json question_payload(const Live& live) const;
  nlohmann::json report(const std::string& id, const Live& live) const;
  nlohmann::json to_document(const Live& live) const;
  void persist(const std::string& id, const Live& live);
  std::int64_t now() const;
  std::string new_id();

  ServiceOptions options_;
  std::shared_ptr<SessionStore> store_;
  std::map<ModelKind, Checkpoint> models_;
  std::map<ModelKind, std::shared_ptr<const ConceptGraph>> graphs_;
  std::optional<ImportanceTable> importance_;

  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::mutex id_mutex_;
  std::uint64_t id_state_;
};

/// Per-concept mastery in [0,1]: sigmoid(theta) for IRT, sigmoid of latent
/// dimension (k mod d) for MIRT, theta itself for the neural model.
std::vector<double> mastery_projection(const DiagnosisModel& model, std::span<const double> theta,
                                       std::size_t num_concepts);

/// HTTP front end for a Service. `ui_dir`, when set, is served under /ui.
class HttpServer {
public:
  HttpServer(Service& service, std::optional<std::filesystem::path> ui_dir = std::nullopt);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds host:port (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves requests until stop(); call after bind().
  void run();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace maat
