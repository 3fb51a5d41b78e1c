#include "support.hpp"

#include "maat/checkpoint.hpp"
#include "maat/errors.hpp"
#include "maat/harness.hpp"
#include "maat/importance.hpp"
#include "maat/service.hpp"

#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <thread>

using namespace maat;
using namespace maat::testing;
using nlohmann::json;

namespace {

struct Fixture {
  std::mt19937_64 rng{42};
  ConceptGraph graph = random_graph(rng, 40, 8);
  std::shared_ptr<IrtModel> irt = random_irt(rng, 40);
  std::shared_ptr<MirtModel> mirt = random_mirt(rng, 40, 2);
  std::shared_ptr<NeuralCdmLite> ncdm = random_ncdm(rng, graph);
  ImportanceTable importance = [this] {
    ImportanceTable t;
    t.weights = random_weights(rng, 8);
    return t;
  }();
  std::int64_t clock = 1'000'000;

  ServiceOptions options() {
    ServiceOptions o;
    o.clock = [this] { return clock; };
    o.default_test_length = 10;
    return o;
  }

  void load(Service& s) {
    s.add_model({irt, graph, json::object()});
    s.add_model({mirt, graph, json::object()});
    s.add_model({ncdm, graph, json::object()});
    s.set_importance(importance);
  }
};

HttpResponse post(Service& s, const std::string& path, const json& body) {
  return s.handle("POST", path, body.dump());
}

json answer(std::uint8_t a, const std::string& token) { return json{{"answer", a}, {"idempotency_token", token}}; }

} // namespace

TEST_CASE("health reflects loaded models") {
  Fixture f;
  Service s(f.options());
  CHECK(s.handle("GET", "/healthz", "").status == 503);
  CHECK(post(s, "/sessions", {{"model", "irt"}}).status == 503);
  CHECK(post(s, "/sessions", {{"model", "irt"}}).body["code"] == "not_ready");
  f.load(s);
  const auto h = s.handle("GET", "/healthz", "");
  CHECK(h.status == 200);
  CHECK(h.body["models"] == json::array({"irt", "mirt", "ncdm"}));
}

TEST_CASE("session lifecycle") {
  Fixture f;
  Service s(f.options());
  f.load(s);
  const auto start = post(s, "/sessions", {{"model", "irt"}, {"N", 3}, {"seed", 5}});
  REQUIRE(start.status == 201);
  CHECK(start.body["status"] == "active");
  CHECK(start.body["step"] == 0);
  CHECK(start.body["test_length"] == 3);
  const std::string id = start.body["session_id"];
  const std::size_t q0 = start.body["question"]["id"];
  CHECK(!start.body["question"]["concepts"].empty());

  const auto r1 = post(s, "/sessions/" + id + "/answers", {{"answer", 1}, {"idempotency_token", "a"}, {"question_id", q0}});
  REQUIRE(r1.status == 200);
  CHECK(r1.body["step"] == 1);
  CHECK(r1.body["status"] == "active");
  CHECK(r1.body["question"]["id"] != q0);
  CHECK_FALSE(r1.body.contains("report"));

  // Replaying a token returns the stored reply and changes nothing.
  CHECK(post(s, "/sessions/" + id + "/answers", answer(0, "a")).body == r1.body);
  CHECK(s.handle("GET", "/sessions/" + id + "/diagnosis", "").body["step"] == 1);

  CHECK(post(s, "/sessions/" + id + "/answers", {{"answer", 1}}).status == 409);
  CHECK(post(s, "/sessions/" + id + "/answers", {{"answer", 1}}).body["code"] == "token_required");
  CHECK(post(s, "/sessions/" + id + "/answers", answer(2, "b")).status == 400);
  const auto stale = post(s, "/sessions/" + id + "/answers", {{"answer", 1}, {"idempotency_token", "b"}, {"question_id", q0}});
  CHECK(stale.status == 409);
  CHECK(stale.body["code"] == "stale_question");

  CHECK(post(s, "/sessions/" + id + "/answers", answer(0, "b")).status == 200);
  const auto last = post(s, "/sessions/" + id + "/answers", answer(1, "c"));
  REQUIRE(last.status == 200);
  CHECK(last.body["status"] == "finished");
  CHECK(last.body["question"].is_null());
  REQUIRE(last.body.contains("report"));
  CHECK(last.body["report"]["history"].size() == 3);
  CHECK(post(s, "/sessions/" + id + "/answers", answer(1, "d")).status == 409);
  CHECK(post(s, "/sessions/" + id + "/answers", answer(1, "c")).body == last.body);

  const auto diag = s.handle("GET", "/sessions/" + id + "/diagnosis", "");
  REQUIRE(diag.status == 200);
  const auto& d = diag.body;
  CHECK(d["status"] == "finished");
  CHECK(d["model"] == "irt");
  CHECK(d["strategy"] == "maat");
  CHECK(d["step"] == 3);
  CHECK(d["mastery"].size() == 8);
  CHECK(d["history"][0]["question"] == q0);
  CHECK(d["history"][0]["answer"] == 1);
  CHECK(d["history"][1]["answer"] == 0);
  CHECK(d["cov"].get<double>() > 0.0);
  CHECK(d["cov"].get<double>() <= 1.0);
  CHECK(d == last.body["report"]);
  // Mixed answers: the in-sample AUC is defined.
  CHECK(d["inf_proxy"].is_number());
}

TEST_CASE("diagnosis is a pure read and theta rises after a correct IRT answer") {
  Fixture f;
  Service s(f.options());
  f.load(s);
  const auto start = post(s, "/sessions", {{"model", "irt"}, {"N", 5}});
  const std::string id = start.body["session_id"];
  const auto before = s.handle("GET", "/sessions/" + id + "/diagnosis", "").body;
  CHECK(before["theta"][0] == 0.0);
  CHECK(before["inf_proxy"].is_null());
  CHECK(s.handle("GET", "/sessions/" + id + "/diagnosis", "").body == before);
  post(s, "/sessions/" + id + "/answers", answer(1, "t1"));
  const auto after = s.handle("GET", "/sessions/" + id + "/diagnosis", "").body;
  CHECK(after["theta"][0].get<double>() > 0.0);
  CHECK(after["mastery"][0]["mastery"].get<double>() > 0.5);
  CHECK(s.handle("GET", "/sessions/" + id + "/diagnosis", "").body == after);
}

TEST_CASE("request validation") {
  Fixture f;
  Service s(f.options());
  f.load(s);
  auto code = [&](const json& body) { return post(s, "/sessions", body); };
  CHECK(code({{"model", "cdm"}}).status == 400);
  CHECK(code({{"strategy", "maat"}}).status == 400);
  CHECK(code({{"model", "irt"}, {"strategy", "nope"}}).status == 400);
  CHECK(code({{"model", "irt"}, {"N", 0}}).status == 400);
  CHECK(code({{"model", "irt"}, {"N", 41}}).status == 400);
  CHECK(code({{"model", "irt"}, {"K_C", 0}}).status == 400);
  CHECK(code({{"model", "irt"}, {"K_C", "all"}}).status == 201);
  const auto inc = code({{"model", "mirt"}, {"strategy", "mfi"}});
  CHECK(inc.status == 400);
  CHECK(inc.body["code"] == "incompatible");
  CHECK(code({{"model", "mirt"}, {"strategy", "dopt"}}).status == 201);
  CHECK(s.handle("POST", "/sessions", "{not json").status == 400);
  CHECK(s.handle("GET", "/sessions", "").status == 405);
  CHECK(s.handle("DELETE", "/healthz", "").status == 405);
  CHECK(s.handle("GET", "/nowhere", "").status == 404);
  CHECK(s.handle("GET", "/sessions/unknown/diagnosis", "").status == 404);
  CHECK(post(s, "/sessions/unknown/answers", answer(1, "x")).status == 404);
  const auto err = s.handle("GET", "/nowhere", "");
  CHECK(err.body.contains("code"));
  CHECK(err.body.contains("message"));
}

TEST_CASE("service sessions match run_session with scripted answers") {
  Fixture f;
  Service s(f.options());
  f.load(s);
  const std::vector<std::uint8_t> script{1, 0, 0, 1, 1, 0, 1, 1, 0, 0};
  for (auto [model, strategy] : std::vector<std::pair<std::string, std::string>>{
           {"irt", "maat"}, {"irt", "rand"}, {"irt", "kli"}, {"mirt", "maat"}, {"mirt", "mkli"}, {"ncdm", "maat"}}) {
    CAPTURE(model);
    CAPTURE(strategy);
    const auto start = post(s, "/sessions", {{"model", model}, {"strategy", strategy}, {"N", 10}, {"seed", 17}});
    REQUIRE(start.status == 201);
    const std::string id = start.body["session_id"];
    std::vector<QuestionId> served{question_id(start.body["question"]["id"].get<std::size_t>())};
    for (std::size_t t = 0; t < script.size(); ++t) {
      const auto r = post(s, "/sessions/" + id + "/answers", answer(script[t], "k" + std::to_string(t)));
      REQUIRE(r.status == 200);
      if (!r.body["question"].is_null()) served.push_back(question_id(r.body["question"]["id"].get<std::size_t>()));
    }
    StrategyOptions so;
    const auto kind = parse_model_kind(model);
    std::shared_ptr<const DiagnosisModel> m = kind == ModelKind::irt    ? std::shared_ptr<const DiagnosisModel>(f.irt)
                                              : kind == ModelKind::mirt ? std::shared_ptr<const DiagnosisModel>(f.mirt)
                                                                        : std::shared_ptr<const DiagnosisModel>(f.ncdm);
    const auto trace = run_session(m, std::make_shared<const ConceptGraph>(f.graph), f.importance.weights,
                                   make_strategy(strategy, so), scripted_oracle(script), examinee_id(0),
                                   {10, 17, {}});
    CHECK(served == trace.questions);
    const auto diag = s.handle("GET", "/sessions/" + id + "/diagnosis", "").body;
    CHECK(diag["theta"].get<std::vector<double>>() == trace.thetas.back());
  }
}

TEST_CASE("sessions persist in SQLite and resume") {
  Fixture f;
  const auto dir = temp_dir("service_store");
  const auto path = dir / "sessions.db";
  std::string id;
  json after_two;
  {
    Service s(f.options(), std::make_shared<SqliteSessionStore>(path));
    f.load(s);
    id = post(s, "/sessions", {{"model", "ncdm"}, {"N", 4}, {"seed", 3}}).body["session_id"];
    post(s, "/sessions/" + id + "/answers", answer(1, "x1"));
    after_two = post(s, "/sessions/" + id + "/answers", answer(0, "x2")).body;
  }
  Service s(f.options(), std::make_shared<SqliteSessionStore>(path));
  f.load(s);
  CHECK(s.handle("GET", "/sessions/" + id + "/diagnosis", "").status == 404);
  CHECK(s.resume() == 1);
  const auto diag = s.handle("GET", "/sessions/" + id + "/diagnosis", "");
  REQUIRE(diag.status == 200);
  CHECK(diag.body["step"] == 2);
  // Token replay survives the restart.
  CHECK(post(s, "/sessions/" + id + "/answers", answer(1, "x2")).body == after_two);
  const auto next = post(s, "/sessions/" + id + "/answers", answer(1, "x3"));
  CHECK(next.status == 200);
  CHECK(next.body["step"] == 3);

  SqliteSessionStore raw(path);
  const auto doc = raw.get(id);
  REQUIRE(doc.has_value());
  CHECK((*doc)["records"].size() == 3);
  CHECK((*doc)["model"] == "ncdm");
}

TEST_CASE("sessions expire after the TTL") {
  Fixture f;
  auto store = std::make_shared<MemorySessionStore>();
  Service s(f.options(), store);
  f.load(s);
  const std::string id = post(s, "/sessions", {{"model", "irt"}, {"N", 4}}).body["session_id"];
  f.clock += 24 * 3600;
  CHECK(s.handle("GET", "/sessions/" + id + "/diagnosis", "").status == 200);
  f.clock += 1;
  CHECK(s.handle("GET", "/sessions/" + id + "/diagnosis", "").status == 404);
  CHECK(post(s, "/sessions/" + id + "/answers", answer(1, "late")).status == 404);
  CHECK_FALSE(store->get(id).has_value());

  const std::string other = post(s, "/sessions", {{"model", "irt"}}).body["session_id"];
  f.clock += 24 * 3600 + 1;
  Service fresh(f.options(), store);
  f.load(fresh);
  CHECK(fresh.resume() == 0);
  CHECK_FALSE(store->get(other).has_value());
}

TEST_CASE("HTTP round trip and concurrent sessions") {
  Fixture f;
  Service s(f.options());
  f.load(s);
  HttpServer server(s);
  const int port = server.bind("127.0.0.1", 0);
  std::thread runner([&] { server.run(); });
  httplib::Client cli("127.0.0.1", port);
  cli.set_connection_timeout(5);

  auto health = cli.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(cli.Get("/sessions")->status == 405);
  CHECK(cli.Get("/missing")->status == 404);
  CHECK(json::parse(cli.Get("/missing")->body)["code"] == "not_found");

  std::atomic<int> failures{0};
  std::vector<std::thread> workers;
  for (int w = 0; w < 6; ++w) {
    workers.emplace_back([&, w] {
      httplib::Client c("127.0.0.1", port);
      const auto start = c.Post("/sessions", json{{"model", w % 2 ? "irt" : "mirt"}, {"N", 6}, {"seed", w}}.dump(),
                                "application/json");
      if (!start || start->status != 201) {
        ++failures;
        return;
      }
      const std::string id = json::parse(start->body)["session_id"];
      for (int t = 0; t < 6; ++t) {
        const auto r = c.Post("/sessions/" + id + "/answers", answer(std::uint8_t((t + w) % 2), std::to_string(t)).dump(),
                              "application/json");
        if (!r || r->status != 200) ++failures;
      }
      const auto d = c.Get("/sessions/" + id + "/diagnosis");
      if (!d || json::parse(d->body)["status"] != "finished") ++failures;
    });
  }
  for (auto& t : workers) t.join();
  CHECK(failures == 0);
  server.stop();
  runner.join();
}

TEST_CASE("mastery projection per model kind") {
  IrtModel irt({1.0}, {0.0});
  const auto m = mastery_projection(irt, Ability{0.0}, 3);
  CHECK(m == std::vector<double>(3, 0.5));
  MirtModel mirt(2, {1.0, 1.0}, {0.0});
  const auto mm = mastery_projection(mirt, Ability{0.0, 100.0}, 3);
  CHECK(mm[0] == 0.5);
  CHECK(mm[1] == doctest::Approx(1.0));
  CHECK(mm[2] == 0.5);
}
