#include "maat/synthetic.hpp"

#include "maat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

namespace maat {

void SyntheticSpec::validate() const {
  if (num_examinees == 0 || num_questions == 0 || num_concepts == 0) {
    throw ValidationError("synthetic counts must all be at least 1");
  }
  if (min_concepts_per_question == 0 || min_concepts_per_question > max_concepts_per_question) {
    throw ValidationError("concepts per question must satisfy 1 <= min <= max");
  }
  if (max_concepts_per_question > num_concepts) {
    throw ValidationError("max_concepts_per_question exceeds the number of concepts");
  }
  if (min_records_per_examinee == 0 || min_records_per_examinee > max_records_per_examinee) {
    throw ValidationError("records per examinee must satisfy 1 <= min <= max");
  }
  if (max_records_per_examinee > num_questions) {
    throw ValidationError("max_records_per_examinee exceeds the number of questions");
  }
  if (generator != ModelKind::irt && generator != ModelKind::mirt) {
    throw ValidationError("synthetic generator must be irt or mirt");
  }
  if (generator == ModelKind::mirt && mirt_dim == 0) throw ValidationError("mirt_dim must be >= 1");
  if (discrimination_min <= 0.0 || discrimination_min > discrimination_max) {
    throw ValidationError("discrimination bounds must satisfy 0 < min <= max");
  }
  if (log_discrimination_sd < 0 || difficulty_sd < 0 || ability_sd < 0 || zipf_exponent < 0) {
    throw ValidationError("standard deviations and the Zipf exponent must be >= 0");
  }
}

std::shared_ptr<const DiagnosisModel> SyntheticTruth::model() const {
  if (kind == ModelKind::irt) return std::make_shared<IrtModel>(discrimination, difficulty);
  return std::make_shared<MirtModel>(dim, discrimination, difficulty);
}

namespace {

double normal(std::mt19937_64& rng, double mean, double sd) {
  if (sd == 0.0) return mean;
  return std::normal_distribution<double>(mean, sd)(rng);
}

std::size_t uniform_int(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Draws from `weights` without replacement, skipping entries already in `out`.
void draw_concepts(std::mt19937_64& rng, const std::vector<double>& weights, std::size_t count,
                   std::vector<std::size_t>& out) {
  std::vector<double> w = weights;
  for (auto k : out) w[k] = 0.0;
  while (out.size() < count) {
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    const std::size_t k = pick(rng);
    out.push_back(k);
    w[k] = 0.0;
  }
}

} // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::size_t nq = spec.num_questions, nk = spec.num_concepts, ne = spec.num_examinees;

  std::vector<double> popularity(nk);
  for (std::size_t k = 0; k < nk; ++k) popularity[k] = 1.0 / std::pow(double(k + 1), spec.zipf_exponent);

  std::vector<std::vector<std::size_t>> concepts(nq);
  for (std::size_t k = 0; k < nk; ++k) {
    auto& list = concepts[k % nq];
    if (std::find(list.begin(), list.end(), k) == list.end()) list.push_back(k);
  }
  for (std::size_t q = 0; q < nq; ++q) {
    std::size_t want = uniform_int(rng, spec.min_concepts_per_question, spec.max_concepts_per_question);
    want = std::max(want, concepts[q].size());
    draw_concepts(rng, popularity, want, concepts[q]);
    std::sort(concepts[q].begin(), concepts[q].end());
  }
  std::vector<ConceptGraph::Link> links;
  for (std::size_t q = 0; q < nq; ++q) {
    for (auto k : concepts[q]) links.emplace_back(question_id(q), concept_id(k));
  }
  ConceptGraph graph(nq, nk, std::move(links));

  auto draw_a = [&] {
    const double a = std::exp(normal(rng, spec.log_discrimination_mean, spec.log_discrimination_sd));
    return std::clamp(a, spec.discrimination_min, spec.discrimination_max);
  };

  SyntheticTruth truth;
  truth.kind = spec.generator;
  truth.dim = spec.generator == ModelKind::irt ? 1 : spec.mirt_dim;
  truth.discrimination.assign(nq * truth.dim, 0.0);
  truth.difficulty.resize(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    const double b = normal(rng, spec.difficulty_mean, spec.difficulty_sd);
    if (spec.generator == ModelKind::irt) {
      truth.discrimination[q] = draw_a();
      truth.difficulty[q] = b;
    } else {
      // Concept k loads on latent dimension k mod dim.
      double norm2 = 0.0;
      for (auto k : concepts[q]) {
        double& a = truth.discrimination[q * truth.dim + k % truth.dim];
        if (a == 0.0) {
          a = draw_a();
          norm2 += a * a;
        }
      }
      truth.difficulty[q] = -b * std::sqrt(norm2);
    }
  }
  truth.abilities.resize(ne);
  for (auto& theta : truth.abilities) {
    theta.resize(truth.dim);
    for (auto& x : theta) x = normal(rng, spec.ability_mean, spec.ability_sd);
  }
  const auto model = truth.model();

  std::vector<Record> records;
  std::vector<std::size_t> order(nq);
  for (std::size_t e = 0; e < ne; ++e) {
    const std::size_t count =
        uniform_int(rng, spec.min_records_per_examinee, spec.max_records_per_examinee);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < count; ++i) {
      const auto q = question_id(order[i]);
      const double p = model->predict(truth.abilities[e], q);
      const auto answer = std::uint8_t(std::bernoulli_distribution(p)(rng));
      records.push_back(Record{examinee_id(e), q, answer});
    }
  }

  return SyntheticData{make_environment(std::move(graph), std::move(records), ne), std::move(truth)};
}

nlohmann::json truth_to_json(const SyntheticTruth& truth) {
  return {{"format", "maat-synthetic-truth"},
          {"version", 1},
          {"kind", std::string(to_string(truth.kind))},
          {"dim", truth.dim},
          {"discrimination", truth.discrimination},
          {"difficulty", truth.difficulty},
          {"abilities", truth.abilities}};
}

SyntheticTruth truth_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format") != "maat-synthetic-truth") throw ValidationError("not a truth file");
    SyntheticTruth t;
    t.kind = parse_model_kind(doc.at("kind").get<std::string>());
    t.dim = doc.at("dim").get<std::size_t>();
    t.discrimination = doc.at("discrimination").get<std::vector<double>>();
    t.difficulty = doc.at("difficulty").get<std::vector<double>>();
    t.abilities = doc.at("abilities").get<std::vector<Ability>>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed truth file: ") + e.what());
  }
}

void save_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  save_dataset(data.env, dir);
  std::ofstream out(dir / "truth.json");
  if (!out) throw ValidationError("cannot write " + (dir / "truth.json").string());
  out << truth_to_json(data.truth).dump() << '\n';
}

} // namespace maat
