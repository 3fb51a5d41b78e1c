#include "maat/service.hpp"

#include "maat/errors.hpp"
#include "maat/metrics.hpp"

#include <chrono>
#include <cstdio>
#include <random>

namespace maat {

using nlohmann::json;

std::vector<double> mastery_projection(const DiagnosisModel& model, std::span<const double> theta,
                                       std::size_t num_concepts) {
  std::vector<double> out(num_concepts);
  switch (model.kind()) {
    case ModelKind::irt:
      for (auto& m : out) m = detail::sigmoid(theta[0]);
      break;
    case ModelKind::mirt:
      for (std::size_t k = 0; k < num_concepts; ++k) out[k] = detail::sigmoid(theta[k % theta.size()]);
      break;
    case ModelKind::ncdm:
      for (std::size_t k = 0; k < num_concepts; ++k) out[k] = theta[k];
      break;
  }
  return out;
}

namespace {

HttpResponse error(int status, std::string code, std::string message) {
  return HttpResponse{status, json{{"code", std::move(code)}, {"message", std::move(message)}}};
}

} // namespace

struct Service::Live {
  struct Step {
    QuestionId question{};
    double predicted = 0.0;
    std::uint8_t answer = 0;
  };

  ModelKind kind = ModelKind::irt;
  std::string strategy;
  std::size_t k_c = 10;
  std::int64_t created = 0;
  std::int64_t last_active = 0;
  std::unique_ptr<CatSession> session;
  std::optional<QuestionId> pending;
  std::vector<Step> history;
  std::map<std::string, HttpResponse> replies;

  void answer(QuestionId q, std::uint8_t a) {
    const double p = session->model().predict(session->theta(), q);
    session->observe(q, a);
    history.push_back({q, p, a});
    pending.reset();
    if (!session->finished()) pending = session->select_next();
  }
};

struct Service::Entry {
  std::mutex mutex;
  std::unique_ptr<Live> live;
};

Service::Service(ServiceOptions options, std::shared_ptr<SessionStore> store)
    : options_(std::move(options)), store_(std::move(store)) {
  if (!options_.clock) {
    options_.clock = [] {
      return std::chrono::duration_cast<std::chrono::seconds>(
                 std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
  std::random_device rd;
  id_state_ = (std::uint64_t(rd()) << 32) ^ rd() ^ std::uint64_t(options_.clock());
}

std::int64_t Service::now() const { return options_.clock(); }

std::string Service::new_id() {
  std::lock_guard lock(id_mutex_);
  char buf[33];
  const std::uint64_t hi = mix_seed(id_state_, 1), lo = mix_seed(id_state_, 2);
  id_state_ = mix_seed(id_state_, 3);
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(hi),
                static_cast<unsigned long long>(lo));
  return buf;
}

void Service::add_model(Checkpoint checkpoint) {
  if (!checkpoint.model) throw ContractViolation("checkpoint without a model");
  const auto kind = checkpoint.model->kind();
  if (importance_ && importance_->weights.size() != checkpoint.graph.num_concepts()) {
    throw ValidationError("model concept count does not match the importance table");
  }
  graphs_[kind] = std::make_shared<const ConceptGraph>(checkpoint.graph);
  models_[kind] = std::move(checkpoint);
}

void Service::set_importance(ImportanceTable table) {
  for (const auto& [kind, cp] : models_) {
    if (cp.graph.num_concepts() != table.weights.size()) {
      throw ValidationError("importance table does not match the " + std::string(to_string(kind)) +
                            " model's concept count");
    }
  }
  importance_ = std::move(table);
}

bool Service::ready() const { return importance_.has_value() && !models_.empty(); }

HttpResponse Service::healthz() const {
  json models = json::array();
  for (const auto& [kind, cp] : models_) models.push_back(std::string(to_string(kind)));
  std::size_t live = 0;
  {
    std::shared_lock lock(sessions_mutex_);
    live = sessions_.size();
  }
  return HttpResponse{ready() ? 200 : 503, json{{"status", ready() ? "ok" : "warming"},
                                                {"models", models},
                                                {"importance", importance_.has_value()},
                                                {"sessions", live}}};
}

json Service::question_payload(const Live& live) const {
  if (!live.pending) return nullptr;
  json concepts = json::array();
  for (auto k : live.session->graph().concepts_of(*live.pending)) concepts.push_back(idx(k));
  return json{{"id", idx(*live.pending)}, {"concepts", concepts}};
}

json Service::report(const std::string& id, const Live& live) const {
  const auto& s = *live.session;
  json history = json::array();
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (std::size_t i = 0; i < live.history.size(); ++i) {
    const auto& h = live.history[i];
    history.push_back({{"step", i + 1}, {"question", idx(h.question)}, {"predicted", h.predicted},
                       {"answer", h.answer}});
    scores.push_back(s.model().predict(s.theta(), h.question));
    labels.push_back(h.answer);
  }
  const auto mastery = mastery_projection(s.model(), s.theta(), s.graph().num_concepts());
  json mastery_json = json::array();
  for (std::size_t k = 0; k < mastery.size(); ++k) {
    mastery_json.push_back({{"concept", k}, {"mastery", mastery[k]}});
  }
  const auto inf = auc(scores, labels);
  return json{{"session_id", id},
              {"status", s.finished() ? "finished" : "active"},
              {"model", std::string(to_string(live.kind))},
              {"strategy", live.strategy},
              {"step", s.step()},
              {"test_length", s.config().test_length},
              {"theta", s.theta()},
              {"mastery", mastery_json},
              {"history", history},
              {"cov", coverage_metric(s.state().tested(), s.graph())},
              {"inf_proxy", inf ? json(*inf) : json(nullptr)}};
}

json Service::to_document(const Live& live) const {
  json records = json::array();
  for (const auto& h : live.history) records.push_back({idx(h.question), h.answer});
  json replies = json::object();
  for (const auto& [token, r] : live.replies) replies[token] = {{"status", r.status}, {"body", r.body}};
  return json{{"model", std::string(to_string(live.kind))},
              {"strategy", live.strategy},
              {"k_c", live.k_c},
              {"test_length", live.session->config().test_length},
              {"seed", live.session->config().seed},
              {"created", live.created},
              {"last_active", live.last_active},
              {"records", records},
              {"replies", replies}};
}

void Service::persist(const std::string& id, const Live& live) {
  if (store_) store_->put(id, to_document(live), live.last_active);
}

std::unique_ptr<Service::Live> Service::rebuild(const json& doc) const {
  auto live = std::make_unique<Live>();
  live->kind = parse_model_kind(doc.at("model").get<std::string>());
  live->strategy = doc.at("strategy").get<std::string>();
  live->k_c = doc.at("k_c").get<std::size_t>();
  live->created = doc.at("created").get<std::int64_t>();
  live->last_active = doc.at("last_active").get<std::int64_t>();
  const auto& cp = models_.at(live->kind);
  StrategyOptions so = options_.strategy_options;
  so.k_c = live->k_c;
  SessionConfig sc{doc.at("test_length").get<std::size_t>(), doc.at("seed").get<std::uint64_t>(),
                   options_.update};
  live->session = std::make_unique<CatSession>(cp.model, graphs_.at(live->kind), importance_->weights,
                                               make_strategy(live->strategy, so), examinee_id(0), sc);
  live->pending = live->session->select_next();
  for (const auto& r : doc.at("records")) {
    live->answer(question_id(r.at(0).get<std::size_t>()), r.at(1).get<std::uint8_t>());
  }
  for (const auto& [token, r] : doc.at("replies").items()) {
    live->replies[token] = HttpResponse{r.at("status").get<int>(), r.at("body")};
  }
  return live;
}

std::size_t Service::resume() {
  if (!store_) return 0;
  store_->purge_before(now() - options_.ttl_seconds);
  std::size_t count = 0;
  for (auto& [id, doc] : store_->all()) {
    try {
      auto live = rebuild(doc);
      auto entry = std::make_shared<Entry>();
      entry->live = std::move(live);
      std::unique_lock lock(sessions_mutex_);
      sessions_[id] = std::move(entry);
      ++count;
    } catch (const std::exception&) {
      // Model no longer loaded or document unreadable: leave it in the store.
    }
  }
  return count;
}

std::shared_ptr<Service::Entry> Service::find(const std::string& id) {
  std::shared_ptr<Entry> entry;
  {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(id);
    if (it != sessions_.end()) entry = it->second;
  }
  return entry;
}

HttpResponse Service::start_session(const json& req) {
  if (!req.is_object()) return error(400, "bad_request", "request body must be a JSON object");
  if (!req.contains("model") || !req["model"].is_string()) {
    return error(400, "bad_request", "field 'model' (irt, mirt or ncdm) is required");
  }
  ModelKind kind;
  std::unique_ptr<Strategy> strategy;
  std::size_t n = options_.default_test_length;
  std::size_t k_c = options_.default_k_c;
  std::uint64_t seed = options_.default_seed;
  std::string strategy_name = "maat";
  try {
    kind = parse_model_kind(req["model"].get<std::string>());
    if (req.contains("strategy")) {
      if (!req["strategy"].is_string()) return error(400, "bad_request", "'strategy' must be a string");
      strategy_name = req["strategy"].get<std::string>();
    }
    if (req.contains("N")) {
      if (!req["N"].is_number_integer() || req["N"].get<std::int64_t>() < 1) {
        return error(400, "bad_request", "'N' must be an integer >= 1");
      }
      n = req["N"].get<std::size_t>();
    }
    if (req.contains("K_C")) {
      if (req["K_C"] == "all") {
        k_c = 0;
      } else if (!req["K_C"].is_number_integer() || req["K_C"].get<std::int64_t>() < 1) {
        return error(400, "bad_request", "'K_C' must be an integer >= 1 or \"all\"");
      } else {
        k_c = req["K_C"].get<std::size_t>();
      }
    }
    if (req.contains("seed")) {
      if (!req["seed"].is_number_unsigned()) return error(400, "bad_request", "'seed' must be a non-negative integer");
      seed = req["seed"].get<std::uint64_t>();
    }
    StrategyOptions so = options_.strategy_options;
    so.k_c = k_c;
    strategy = make_strategy(strategy_name, so);
    check_compatible(*strategy, kind);
  } catch (const ConfigError& e) {
    return error(400, "bad_request", e.what());
  } catch (const CapabilityError& e) {
    return error(400, "incompatible", e.what());
  }

  if (!models_.count(kind) || !importance_) {
    return error(503, "not_ready", "model " + std::string(to_string(kind)) + " or the importance table is not loaded");
  }
  const auto& cp = models_.at(kind);
  if (n > cp.graph.num_questions() || n > options_.max_test_length) {
    return error(400, "bad_request", "'N' exceeds the question pool");
  }

  auto live = std::make_unique<Live>();
  live->kind = kind;
  live->strategy = strategy_name;
  live->k_c = k_c;
  live->created = live->last_active = now();
  live->session = std::make_unique<CatSession>(cp.model, graphs_.at(kind), importance_->weights,
                                               std::move(strategy), examinee_id(0),
                                               SessionConfig{n, seed, options_.update});
  live->pending = live->session->select_next();

  const std::string id = new_id();
  HttpResponse resp{201, json{{"session_id", id},
                              {"status", "active"},
                              {"step", 0},
                              {"test_length", n},
                              {"question", question_payload(*live)}}};
  persist(id, *live);
  auto entry = std::make_shared<Entry>();
  entry->live = std::move(live);
  std::unique_lock lock(sessions_mutex_);
  sessions_[id] = std::move(entry);
  return resp;
}

HttpResponse Service::submit_answer(const std::string& id, const json& req) {
  auto entry = find(id);
  if (!entry) return error(404, "not_found", "unknown session " + id);
  std::lock_guard lock(entry->mutex);
  auto& live = *entry->live;
  if (now() - live.last_active > options_.ttl_seconds) {
    std::unique_lock map_lock(sessions_mutex_);
    sessions_.erase(id);
    if (store_) store_->erase(id);
    return error(404, "not_found", "session " + id + " has expired");
  }
  if (!req.is_object()) return error(400, "bad_request", "request body must be a JSON object");
  if (!req.contains("idempotency_token") || !req["idempotency_token"].is_string() ||
      req["idempotency_token"].get<std::string>().empty()) {
    return error(409, "token_required", "every answer needs a fresh idempotency_token");
  }
  const std::string token = req["idempotency_token"].get<std::string>();
  if (auto it = live.replies.find(token); it != live.replies.end()) return it->second;

  if (live.session->finished()) return error(409, "finished", "session " + id + " is finished");
  if (!req.contains("answer") || !req["answer"].is_number_integer() ||
      (req["answer"] != 0 && req["answer"] != 1)) {
    return error(400, "bad_request", "'answer' must be 0 or 1");
  }
  if (req.contains("question_id")) {
    if (!req["question_id"].is_number_unsigned() || req["question_id"].get<std::size_t>() != idx(*live.pending)) {
      return error(409, "stale_question", "answer does not refer to the pending question");
    }
  }

  live.answer(*live.pending, req["answer"].get<std::uint8_t>());
  live.last_active = now();
  const bool done = live.session->finished();
  json body{{"session_id", id},
            {"status", done ? "finished" : "active"},
            {"step", live.session->step()},
            {"test_length", live.session->config().test_length},
            {"question", question_payload(live)}};
  if (done) body["report"] = report(id, live);
  HttpResponse resp{200, body};
  live.replies[token] = resp;
  persist(id, live);
  return resp;
}

HttpResponse Service::get_diagnosis(const std::string& id) {
  auto entry = find(id);
  if (!entry) return error(404, "not_found", "unknown session " + id);
  std::lock_guard lock(entry->mutex);
  if (now() - entry->live->last_active > options_.ttl_seconds) {
    return error(404, "not_found", "session " + id + " has expired");
  }
  return HttpResponse{200, report(id, *entry->live)};
}

HttpResponse Service::handle(std::string_view method, std::string_view path, std::string_view body) {
  std::vector<std::string_view> parts;
  while (!path.empty()) {
    if (path.front() == '/') {
      path.remove_prefix(1);
      continue;
    }
    const auto end = path.find('/');
    parts.push_back(path.substr(0, end));
    path = end == std::string_view::npos ? std::string_view{} : path.substr(end);
  }

  auto parse_body = [&](json& out) -> std::optional<HttpResponse> {
    try {
      out = body.empty() ? json::object() : json::parse(body);
      return std::nullopt;
    } catch (const json::parse_error& e) {
      return error(400, "bad_request", std::string("malformed JSON: ") + e.what());
    }
  };
  auto wrong_method = [] { return error(405, "method_not_allowed", "method not allowed"); };

  try {
    if (parts.size() == 1 && parts[0] == "healthz") {
      return method == "GET" ? healthz() : wrong_method();
    }
    if (parts.size() == 1 && parts[0] == "sessions") {
      if (method != "POST") return wrong_method();
      json req;
      if (auto err = parse_body(req)) return *err;
      return start_session(req);
    }
    if (parts.size() == 3 && parts[0] == "sessions" && parts[2] == "answers") {
      if (method != "POST") return wrong_method();
      json req;
      if (auto err = parse_body(req)) return *err;
      return submit_answer(std::string(parts[1]), req);
    }
    if (parts.size() == 3 && parts[0] == "sessions" && parts[2] == "diagnosis") {
      if (method != "GET") return wrong_method();
      return get_diagnosis(std::string(parts[1]));
    }
    return error(404, "not_found", "no such route");
  } catch (const std::exception& e) {
    return error(500, "internal", e.what());
  }
}

} // namespace maat
