#include "support.hpp"

#include "maat/cdm.hpp"
#include "maat/checkpoint.hpp"
#include "maat/errors.hpp"
#include "maat/synthetic.hpp"

#include <doctest.h>

using namespace maat;
using namespace maat::testing;

TEST_CASE("model kinds parse and print") {
  CHECK(parse_model_kind("irt") == ModelKind::irt);
  CHECK(parse_model_kind("mirt") == ModelKind::mirt);
  CHECK(parse_model_kind("ncdm") == ModelKind::ncdm);
  CHECK(to_string(ModelKind::mirt) == "mirt");
  CHECK_THROWS_AS(parse_model_kind("3pl"), ConfigError);
}

TEST_CASE("IRT predict: one half at theta = b, increasing in theta") {
  IrtModel m({1.0, 2.0}, {0.3, -1.0});
  CHECK(m.predict(Ability{0.3}, question_id(0)) == doctest::Approx(0.5).epsilon(1e-15));
  double prev = 0.0;
  for (double t = -6.0; t <= 6.0; t += 0.25) {
    const double p = m.predict(Ability{t}, question_id(0));
    CHECK(p > prev);
    prev = p;
  }
  CHECK(m.predict(Ability{60.0}, question_id(0)) == doctest::Approx(1.0));
  CHECK_THROWS_AS(m.predict(Ability{0.0}, question_id(2)), LookupError);
  CHECK_THROWS_AS(m.predict(Ability{0.0, 1.0}, question_id(0)), ContractViolation);
}

TEST_CASE("IRT gradient at theta = b with answer 1 is -a/2") {
  const double a = 1.7;
  IrtModel m({a}, {0.4});
  const auto g = m.loss_gradient(Ability{0.4}, question_id(0), 1);
  CHECK(g[0] == doctest::Approx(-a / 2).epsilon(1e-12));
  const auto fd = fd_gradient(m, Ability{0.4}, question_id(0), 1);
  CHECK(fd[0] == doctest::Approx(-0.85).epsilon(1e-8));
  // Confident and correct: the gradient vanishes.
  CHECK(std::abs(m.loss_gradient(Ability{40.0}, question_id(0), 1)[0]) < 1e-12);
  CHECK(std::abs(m.loss_gradient(Ability{-40.0}, question_id(0), 0)[0]) < 1e-12);
}

TEST_CASE("analytic gradients match central differences for every model") {
  std::mt19937_64 rng(2024);
  const auto graph = random_graph(rng, 30, 6);
  std::vector<std::shared_ptr<const DiagnosisModel>> models{random_irt(rng, 30), random_mirt(rng, 30, 3),
                                                            random_ncdm(rng, graph)};
  for (const auto& model : models) {
    CAPTURE(to_string(model->kind()));
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const auto theta = random_theta(rng, *model);
      const auto q = question_id(rng() % 30);
      const int answer = int(rng() % 2);
      worst = std::max(worst, relative_error(model->loss_gradient(theta, q, answer),
                                             fd_gradient(*model, theta, q, answer)));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("predictions stay in [0,1] for random parameters") {
  std::mt19937_64 rng(77);
  const auto graph = random_graph(rng, 20, 5);
  std::vector<std::shared_ptr<const DiagnosisModel>> models{random_irt(rng, 20), random_mirt(rng, 20, 2),
                                                            random_ncdm(rng, graph)};
  for (const auto& model : models) {
    for (int i = 0; i < 500; ++i) {
      auto theta = random_theta(rng, *model);
      for (auto& x : theta) x *= (model->kind() == ModelKind::ncdm ? 1.0 : 20.0);
      const double p = model->predict(theta, question_id(rng() % 20));
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
}

TEST_CASE("neural CDM is monotone in every mastery entry") {
  std::mt19937_64 rng(31);
  for (int inst = 0; inst < 20; ++inst) {
    const auto graph = random_graph(rng, 15, 5);
    const auto model = random_ncdm(rng, graph, 16);
    for (int i = 0; i < 50; ++i) {
      auto theta = random_theta(rng, *model);
      const auto q = question_id(rng() % 15);
      const double base = model->predict(theta, q);
      for (std::size_t k = 0; k < theta.size(); ++k) {
        auto raised = theta;
        raised[k] = std::min(1.0, raised[k] + 0.1);
        CHECK(model->predict(raised, q) >= base);
      }
    }
  }
  NeuralCdmLite::Parameters bad;
  const ConceptGraph g(1, 1, {{question_id(0), concept_id(0)}});
  bad.num_concepts = 1;
  bad.hidden = 1;
  bad.w1 = {-0.1};
  bad.b1 = {0.0};
  bad.w2 = {1.0};
  bad.raw_diff = {0.0};
  bad.raw_disc = {0.0};
  CHECK_THROWS_AS(NeuralCdmLite(g, bad), ValidationError);
}

TEST_CASE("update: empty records keep theta, a correct answer raises IRT theta") {
  IrtModel m({1.2, 0.8}, {0.0, 0.5});
  const auto theta0 = m.initial_ability();
  CHECK(theta0 == Ability{0.0});
  CHECK(m.update(theta0, {}, {}) == theta0);
  const std::vector<Record> one{{examinee_id(0), question_id(0), 1}};
  CHECK(m.loss_gradient(theta0, question_id(0), 1)[0] < 0.0);
  const auto theta1 = m.update(theta0, one, {});
  CHECK(theta1[0] > theta0[0]);
  CHECK(m.update(theta0, one, {}) == theta1);
  const std::vector<Record> mixed{{examinee_id(0), question_id(0), 1}, {examinee_id(1), question_id(1), 0}};
  CHECK_THROWS_AS(m.update(theta0, mixed, {}), ContractViolation);
}

TEST_CASE("update never raises the examinee's training loss") {
  std::mt19937_64 rng(5);
  const auto graph = random_graph(rng, 25, 5);
  std::vector<std::shared_ptr<const DiagnosisModel>> models{random_irt(rng, 25), random_mirt(rng, 25, 3),
                                                            random_ncdm(rng, graph)};
  for (const auto& model : models) {
    for (int trial = 0; trial < 40; ++trial) {
      std::vector<Record> recs;
      for (std::size_t q = 0; q < 25; ++q) {
        if (rng() % 3 == 0) recs.push_back({examinee_id(0), question_id(q), std::uint8_t(rng() % 2)});
      }
      const auto theta = random_theta(rng, *model);
      const UpdateConfig cfg{0.5 + double(rng() % 50), 5};
      const auto after = model->update(theta, recs, cfg);
      CHECK(model->loss(after, recs) <= model->loss(theta, recs));
    }
  }
}

TEST_CASE("pretrain: constant labels, empty input, parameter recovery") {
  const ConceptGraph g(4, 2, {{question_id(0), concept_id(0)}, {question_id(1), concept_id(0)},
                              {question_id(2), concept_id(1)}, {question_id(3), concept_id(1)}});
  std::vector<Record> ones;
  for (std::size_t e = 0; e < 20; ++e) {
    for (std::size_t q = 0; q < 4; ++q) ones.push_back({examinee_id(e), question_id(q), 1});
  }
  for (auto kind : {ModelKind::irt, ModelKind::mirt, ModelKind::ncdm}) {
    CAPTURE(to_string(kind));
    const auto result = pretrain(kind, g, ones, {});
    const auto theta = result.model->initial_ability();
    for (std::size_t q = 0; q < 4; ++q) CHECK(result.model->predict(theta, question_id(q)) >= 0.9);
    CHECK_THROWS_AS(pretrain(kind, g, {}, {}), TrainingError);
  }

  SyntheticSpec spec;
  spec.num_examinees = 300;
  spec.num_questions = 60;
  spec.num_concepts = 6;
  spec.min_records_per_examinee = 40;
  spec.max_records_per_examinee = 60;
  spec.seed = 9;
  const auto data = generate_synthetic(spec);
  const auto fit = pretrain(ModelKind::irt, data.env.graph, data.env.records, {});
  const auto& irt = dynamic_cast<const IrtModel&>(*fit.model);
  CHECK(spearman(irt.difficulties(), data.truth.difficulty) >= 0.8);
  for (double a : irt.discriminations()) {
    CHECK(a >= 0.1);
    CHECK(a <= 4.0);
  }
  // Loss falls over training on average: the last quarter beats the first.
  const auto& loss = fit.epoch_loss;
  const std::size_t q4 = loss.size() / 4;
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < q4; ++i) {
    first += loss[i];
    last += loss[loss.size() - 1 - i];
  }
  CHECK(last < first);
}

TEST_CASE("divergent pretraining names the learning rate") {
  const ConceptGraph g(2, 1, {{question_id(0), concept_id(0)}, {question_id(1), concept_id(0)}});
  std::vector<Record> recs{{examinee_id(0), question_id(0), 1}, {examinee_id(0), question_id(1), 0}};
  PretrainConfig cfg;
  cfg.learning_rate = std::numeric_limits<double>::quiet_NaN();
  try {
    pretrain(ModelKind::mirt, g, recs, cfg);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
  }
}

TEST_CASE("checkpoints round-trip every model kind") {
  std::mt19937_64 rng(12);
  const auto graph = random_graph(rng, 12, 4);
  std::vector<std::shared_ptr<const DiagnosisModel>> models{random_irt(rng, 12), random_mirt(rng, 12, 3),
                                                            random_ncdm(rng, graph)};
  const auto dir = temp_dir("checkpoints");
  for (const auto& model : models) {
    const auto path = dir / ("model." + std::string(to_string(model->kind())) + ".json");
    save_checkpoint(path, *model, graph, {{"note", "test"}});
    const auto cp = load_checkpoint(path);
    CHECK(cp.model->kind() == model->kind());
    CHECK(cp.graph == graph);
    CHECK(cp.config["note"] == "test");
    for (int i = 0; i < 20; ++i) {
      const auto theta = random_theta(rng, *model);
      const auto q = question_id(rng() % 12);
      CHECK(cp.model->predict(theta, q) == model->predict(theta, q));
    }
  }
  auto doc = checkpoint_to_json(*models[0], graph);
  doc["version"] = 99;
  CHECK_THROWS(checkpoint_from_json(doc));
}
