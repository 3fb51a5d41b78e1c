#include "support.hpp"

#include "maat/diversity.hpp"
#include "maat/engine.hpp"
#include "maat/errors.hpp"
#include "maat/experiment_config.hpp"
#include "maat/harness.hpp"
#include "maat/metrics.hpp"
#include "maat/quality.hpp"
#include "maat/synthetic.hpp"

#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

using namespace maat;
using namespace maat::testing;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.name = "small";
  c.synthetic.num_examinees = 40;
  c.synthetic.num_questions = 60;
  c.synthetic.num_concepts = 8;
  c.synthetic.min_records_per_examinee = 20;
  c.synthetic.max_records_per_examinee = 40;
  c.synthetic.seed = 3;
  c.min_testing_records = 35;
  c.test_length = 10;
  c.auc_steps = {5, 10};
  c.pretrain.epochs = 10;
  c.sgns.epochs = 1;
  c.k_n = 5;
  c.threads = 2;
  return c;
}

// Graph whose questions have pairwise distinct concept sets.
ConceptGraph distinct_graph(std::mt19937_64& rng, std::size_t nq, std::size_t nk) {
  for (;;) {
    auto g = random_graph(rng, nq, nk, 3);
    std::set<std::vector<ConceptId>> sets;
    for (std::size_t q = 0; q < nq; ++q) {
      const auto c = g.concepts_of(question_id(q));
      sets.emplace(c.begin(), c.end());
    }
    if (sets.size() == nq) return g;
  }
}

} // namespace

TEST_CASE("AUC matches the pairwise definition") {
  CHECK(*auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<std::uint8_t>{1, 1, 0, 0}) == 1.0);
  CHECK(*auc(std::vector<double>{0.4, 0.4, 0.4}, std::vector<std::uint8_t>{1, 0, 1}) == 0.5);
  CHECK_FALSE(auc(std::vector<double>{0.1, 0.7}, std::vector<std::uint8_t>{1, 1}).has_value());
  CHECK_THROWS_AS(auc(std::vector<double>{0.1}, std::vector<std::uint8_t>{1, 0}), ContractViolation);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 60;
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = double(rng() % 7) / 7.0; // coarse grid forces ties
      y[i] = std::uint8_t(rng() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(std::abs(*auc(s, y) - pairwise_auc(s, y)) < 1e-12);
  }
}

TEST_CASE("SEE and coverage metrics") {
  const std::vector<Ability> est{{1.0}, {-1.0}}, zero{{0.0}, {0.0}};
  CHECK(see_metric(est, est) == 0.0);
  CHECK(see_metric(est, zero) == doctest::Approx(1.0));
  CHECK(squared_error(Ability{1.0, 2.0, -1.0}, Ability{0.5, 0.0, 1.0}) == doctest::Approx(0.25 + 4.0 + 4.0));
  CHECK_THROWS_AS(squared_error(Ability{1.0}, Ability{1.0, 2.0}), ContractViolation);

  std::mt19937_64 rng(2);
  const auto g = random_graph(rng, 30, 9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<QuestionId> t;
    for (std::size_t q = 0; q < 30; ++q) {
      if (rng() % 5 == 0) t.push_back(question_id(q));
    }
    CHECK(coverage_metric(t, g) == nkc(t, g));
  }
}

TEST_CASE("synthetic generator: rates, determinism, structure") {
  SyntheticSpec even;
  even.num_examinees = 100;
  even.num_questions = 200;
  even.min_records_per_examinee = even.max_records_per_examinee = 150;
  even.log_discrimination_sd = 0.0;
  even.difficulty_sd = 0.0;
  even.ability_sd = 0.0;
  const auto half = generate_synthetic(even);
  REQUIRE(half.env.records.size() >= 10000);
  double correct = 0.0;
  for (const auto& r : half.env.records) correct += r.answer;
  CHECK(std::abs(correct / double(half.env.records.size()) - 0.5) < 0.02);

  auto strong = even;
  strong.ability_mean = 5.0;
  const auto high = generate_synthetic(strong);
  correct = 0.0;
  for (const auto& r : high.env.records) correct += r.answer;
  CHECK(correct / double(high.env.records.size()) > 0.95);

  SyntheticSpec spec;
  spec.num_examinees = 30;
  spec.num_questions = 80;
  spec.min_records_per_examinee = 10;
  spec.max_records_per_examinee = 30;
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  CHECK(a.env.records == b.env.records);
  CHECK(a.env.graph == b.env.graph);
  CHECK(a.truth.abilities == b.truth.abilities);
  for (std::size_t q = 0; q < 80; ++q) {
    const auto c = a.env.graph.concepts_of(question_id(q));
    CHECK(c.size() >= 1);
    CHECK(c.size() <= 3);
  }
  for (double x : a.truth.discrimination) {
    CHECK(x >= 0.5);
    CHECK(x <= 2.5);
  }
  spec.seed = 43;
  CHECK_FALSE(generate_synthetic(spec).env.records == a.env.records);

  const auto dir = temp_dir("synthetic");
  save_synthetic(a, dir);
  const auto loaded = load_dataset(dir);
  CHECK(loaded.records.size() == a.env.records.size());
  const auto truth = truth_from_json(truth_to_json(a.truth));
  CHECK(truth.difficulty == a.truth.difficulty);

  spec.num_concepts = 0;
  CHECK_THROWS_AS(generate_synthetic(spec), ValidationError);
}

TEST_CASE("run_session: length, replay restriction, exhaustion") {
  std::mt19937_64 rng(4);
  auto graph = std::make_shared<const ConceptGraph>(random_graph(rng, 40, 8));
  const auto model = random_irt(rng, 40);
  const auto weights = random_weights(rng, 8);
  std::shared_ptr<const Strategy> maat = make_strategy("maat");

  const auto one = run_session(model, graph, weights, maat, scripted_oracle({1}), examinee_id(0), {1, 1, {}});
  CHECK(one.questions.size() == 1);
  CHECK(one.thetas.size() == 1);

  std::vector<Record> recs;
  for (std::size_t q = 0; q < 40; q += 3) recs.push_back({examinee_id(0), question_id(q), std::uint8_t(q % 2)});
  const auto trace = run_session(model, graph, weights, maat, replay_oracle(recs, 40), examinee_id(0),
                                 {recs.size(), 1, {}});
  for (std::size_t t = 0; t < trace.questions.size(); ++t) {
    CHECK(idx(trace.questions[t]) % 3 == 0);
    CHECK(trace.answers[t] == idx(trace.questions[t]) % 2);
    if (t > 0) CHECK(trace.iwkc[t] >= trace.iwkc[t - 1]);
  }
  CHECK_THROWS_AS(run_session(model, graph, weights, maat, replay_oracle(recs, 40), examinee_id(0),
                              {recs.size() + 1, 1, {}}),
                  PoolExhausted);
}

TEST_CASE("K_C = 1 follows the EMC argmax at every step") {
  std::mt19937_64 rng(5);
  for (int inst = 0; inst < 10; ++inst) {
    auto graph = std::make_shared<const ConceptGraph>(random_graph(rng, 50, 10));
    std::vector<std::shared_ptr<const DiagnosisModel>> models{random_irt(rng, 50), random_mirt(rng, 50, 3),
                                                              random_ncdm(rng, *graph)};
    for (const auto& model : models) {
      const auto weights = random_weights(rng, 10);
      const auto truth = random_theta(rng, *model);
      const auto oracle = simulated_oracle(model, truth, rng());
      const SessionConfig sc{20, 7, {}};
      const auto trace = run_session(model, graph, weights, std::make_shared<MaatStrategy>(1), oracle,
                                     examinee_id(0), sc);
      SessionState state(examinee_id(0), 50);
      Ability theta = trace.initial_theta;
      for (std::size_t t = 0; t < trace.questions.size(); ++t) {
        const auto untested = state.untested();
        CHECK(trace.questions[t] == select_candidates(*model, theta, untested, 1).front());
        state.administer(trace.questions[t], trace.answers[t]);
        theta = trace.thetas[t];
      }
    }
  }
}

TEST_CASE("K_C = all follows greedy coverage at every step") {
  std::mt19937_64 rng(6);
  for (int inst = 0; inst < 10; ++inst) {
    auto graph = std::make_shared<const ConceptGraph>(distinct_graph(rng, 40, 12));
    const auto model = random_irt(rng, 40);
    const auto weights = random_weights(rng, 12);
    const auto oracle = simulated_oracle(model, Ability{0.3}, rng());
    const auto trace = run_session(model, graph, weights, std::make_shared<MaatStrategy>(0), oracle,
                                   examinee_id(0), {15, 7, {}});
    CHECK(trace.questions == greedy_maximize(*graph, weights, all_questions(40), 15));
    // Step by step against select_diverse over the whole untested pool.
    CoverageState cov(*graph, weights);
    SessionState state(examinee_id(0), 40);
    for (std::size_t t = 0; t < trace.questions.size(); ++t) {
      const auto pool = state.untested();
      CHECK(trace.questions[t] == select_diverse(cov, pool));
      cov.add(trace.questions[t]);
      state.administer(trace.questions[t], trace.answers[t]);
    }
  }
}

TEST_CASE("sessions are deterministic and restorable") {
  std::mt19937_64 rng(7);
  auto graph = std::make_shared<const ConceptGraph>(random_graph(rng, 30, 6));
  const auto model = random_irt(rng, 30);
  const auto weights = random_weights(rng, 6);
  for (auto name : {"maat", "rand", "mfi", "kli"}) {
    std::shared_ptr<const Strategy> s = make_strategy(name);
    const auto oracle = simulated_oracle(model, Ability{-0.4}, 11);
    const auto a = run_session(model, graph, weights, s, oracle, examinee_id(0), {12, 99, {}});
    const auto b = run_session(model, graph, weights, s, oracle, examinee_id(0), {12, 99, {}});
    CHECK(a.questions == b.questions);
    CHECK(a.thetas == b.thetas);

    std::vector<Record> recs;
    for (std::size_t t = 0; t < 6; ++t) recs.push_back({examinee_id(0), a.questions[t], a.answers[t]});
    const auto restored = CatSession::restore(model, graph, weights, s, examinee_id(0), {12, 99, {}}, recs);
    CHECK(restored.theta() == a.thetas[5]);
    CHECK(restored.select_next() == a.questions[6]);
  }
}

TEST_CASE("experiment configuration parsing and validation") {
  const auto file = parse_experiment_toml(R"(
[experiment]
name = "demo"
pairs = [["maat", "irt"], ["dopt", "mirt"]]
ablation_kc = [1, 0]
test_length = 20
k_c = 5
seed = 9
output = "runs/demo"

[synthetic]
num_examinees = 50

[importance]
gamma = 0.2
k_n = 4
)",
                                          "/base");
  const auto& c = file.config;
  CHECK(c.name == "demo");
  CHECK(c.test_length == 20);
  CHECK(c.k_c == 5);
  CHECK(c.seed == 9);
  CHECK(c.synthetic.num_examinees == 50);
  CHECK(c.gamma == 0.2);
  CHECK(c.k_n == 4);
  CHECK(file.output_dir == std::filesystem::path("/base/runs/demo"));
  const auto arms = expand_pairs(c);
  std::vector<std::string> labels;
  for (const auto& a : arms) labels.push_back(a.label + "/" + std::string(to_string(a.model)));
  CHECK(labels == std::vector<std::string>{"maat/irt", "dopt/mirt", "maat@kc=1/irt", "maat@kc=1/mirt",
                                           "maat@kc=all/irt", "maat@kc=all/mirt"});

  CHECK_THROWS_AS(parse_experiment_toml("[experiment]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_toml("[experiment]\ntest_length = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_toml("[experiment]\nk_c = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_toml("[experiment\n"), ConfigError);

  ExperimentConfig bad;
  bad.pairs = {{"mfi", ModelKind::mirt, 10, ""}, {"dopt", ModelKind::irt, 10, ""}, {"maat", ModelKind::irt, 10, ""}};
  try {
    expand_pairs(bad);
    FAIL("expected a configuration error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("mfi") != std::string::npos);
    CHECK(msg.find("dopt") != std::string::npos);
  }
  const auto spec = parse_synthetic_toml("[synthetic]\nnum_questions = 12\nmin_records_per_examinee = 5\nmax_records_per_examinee = 10\nseed = 5\n");
  CHECK(spec.num_questions == 12);
  CHECK(spec.seed == 5);
}

TEST_CASE("single examinee, RAND, two steps") {
  auto c = small_config();
  c.pairs = {{"rand", ModelKind::irt, 10, ""}};
  c.max_testing = 1;
  c.test_length = 2;
  c.auc_steps = {2};
  const auto report = run_experiment(c);
  std::size_t cov_rows = 0;
  double last = -1.0;
  for (const auto& r : report.rows) {
    if (r.metric != "cov") continue;
    ++cov_rows;
    CHECK(r.value >= last);
    last = r.value;
  }
  CHECK(cov_rows == 2);
  CHECK(report.find("rand", "irt", 2, "cov").has_value());
  CHECK_FALSE(report.find("rand", "irt", 3, "cov").has_value());
}

TEST_CASE("experiment reports are reproducible and re-aggregate exactly") {
  auto c = small_config();
  c.pairs = {{"maat", ModelKind::irt, 10, ""}, {"rand", ModelKind::irt, 10, ""}, {"maat", ModelKind::mirt, 10, ""}};
  const auto r1 = run_experiment(c);
  c.threads = 1;
  const auto r2 = run_experiment(c);
  const auto d1 = temp_dir("report1"), d2 = temp_dir("report2");
  write_report(r1, d1);
  write_report(r2, d2);
  CHECK(slurp(d1 / "runs.csv") == slurp(d2 / "runs.csv"));
  CHECK(slurp(d1 / "curves.csv") == slurp(d2 / "curves.csv"));
  CHECK(slurp(d1 / "runs.csv").rfind("strategy,model,examinee,step,metric,value\n", 0) == 0);
  CHECK(slurp(d1 / "curves.csv").rfind("strategy,model,step,metric,mean,stderr,n\n", 0) == 0);

  const auto rows = read_runs_csv(d1 / "runs.csv");
  REQUIRE(rows.size() == r1.rows.size());
  const auto again = aggregate(rows);
  REQUIRE(again.size() == r1.curves.size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    CHECK(again[i].mean == r1.curves[i].mean);
    CHECK(again[i].stderr_ == r1.curves[i].stderr_);
    CHECK(again[i].n == r1.curves[i].n);
  }

  for (const auto& row : r1.rows) {
    if (row.metric == "auc" || row.metric == "cov") {
      CHECK(row.value >= 0.0);
      CHECK(row.value <= 1.0);
    } else {
      CHECK(row.value >= 0.0);
    }
  }
  const auto json = report_to_json(r1);
  CHECK(json["metadata"]["see_reference"]["irt"] == "generating ability");
  CHECK(json["metadata"]["see_reference"]["mirt"] == "full-record fit");
  CHECK(json["pooled_auc"].size() == 3 * 2);
}

TEST_CASE("aggregate: mean and standard error") {
  const std::vector<RunRow> rows{{"s", "irt", 0, 1, "cov", 1.0}, {"s", "irt", 1, 1, "cov", 2.0},
                                 {"s", "irt", 2, 1, "cov", 6.0}};
  const auto curves = aggregate(rows);
  REQUIRE(curves.size() == 1);
  CHECK(curves[0].mean == 3.0);
  CHECK(curves[0].stderr_ == doctest::Approx(std::sqrt(7.0 / 3.0)));
  CHECK(curves[0].n == 3);
  CHECK(std::stod(format_double(0.1)) == 0.1);
  CHECK(format_double(0.1) == "0.1");
}
