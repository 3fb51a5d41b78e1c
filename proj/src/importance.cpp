#include "maat/importance.hpp"

#include "maat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>

namespace maat {

using nlohmann::json;

std::vector<std::size_t> ResponseEncoding::nonzeros() const {
  if (correct) return {idx(question), num_questions + idx(question)};
  return {idx(question)};
}

std::vector<double> ResponseEncoding::dense() const {
  std::vector<double> x(2 * num_questions, 0.0);
  for (auto i : nonzeros()) x[i] = 1.0;
  return x;
}

ResponseEncoding encode_record(const Record& record, std::size_t num_questions) {
  if (idx(record.question) >= num_questions) {
    throw LookupError("unknown question " + std::to_string(idx(record.question)));
  }
  return ResponseEncoding{record.question, record.answer == 1, num_questions};
}

TestEffectEmbedding::TestEffectEmbedding(std::size_t num_questions, std::size_t dim,
                                         std::vector<double> input, std::vector<double> output)
    : num_questions_(num_questions), dim_(dim), input_(std::move(input)), output_(std::move(output)) {
  if (dim_ < 2) throw ValidationError("embedding dimension must be at least 2");
  if (output_.size() != num_questions_ * dim_) throw ValidationError("embedding output has wrong size");
  if (!input_.empty() && input_.size() != 2 * num_questions_ * dim_) {
    throw ValidationError("embedding input projection has wrong size");
  }
  for (double v : output_) {
    if (!std::isfinite(v)) throw ValidationError("embedding contains non-finite values");
  }
}

TestEffectEmbedding TestEffectEmbedding::from_vectors(std::span<const std::vector<double>> vectors) {
  if (vectors.empty()) throw ValidationError("no embedding vectors given");
  const std::size_t dim = vectors.front().size();
  std::vector<double> flat;
  flat.reserve(vectors.size() * dim);
  for (const auto& v : vectors) {
    if (v.size() != dim) throw ValidationError("embedding vectors differ in dimension");
    flat.insert(flat.end(), v.begin(), v.end());
  }
  return TestEffectEmbedding(vectors.size(), dim, {}, std::move(flat));
}

std::span<const double> TestEffectEmbedding::vector(QuestionId q) const {
  if (idx(q) >= num_questions_) throw LookupError("unknown question " + std::to_string(idx(q)));
  return std::span<const double>(output_).subspan(idx(q) * dim_, dim_);
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) {
  return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

} // namespace

EmbeddingTrainResult train_embeddings(std::span<const Record> historical,
                                      std::size_t num_questions, const SgnsConfig& config) {
  if (config.dim < 2) throw TrainingError("embedding dim must be at least 2");
  if (config.epochs == 0) throw TrainingError("embedding epochs must be at least 1");
  const std::size_t d = config.dim;

  std::vector<std::vector<Record>> groups;
  {
    std::vector<std::size_t> slot;
    std::vector<std::vector<Record>> by_examinee;
    for (const auto& r : historical) {
      if (idx(r.question) >= num_questions) throw TrainingError("record references unknown question");
      const std::size_t e = idx(r.examinee);
      if (e >= slot.size()) slot.resize(e + 1, SIZE_MAX);
      if (slot[e] == SIZE_MAX) {
        slot[e] = by_examinee.size();
        by_examinee.emplace_back();
      }
      by_examinee[slot[e]].push_back(r);
    }
    for (auto& g : by_examinee) {
      if (g.size() >= 2) groups.push_back(std::move(g));
    }
  }
  EmbeddingTrainResult result;
  {
    std::size_t examinees = 0;
    std::vector<std::uint8_t> seen;
    for (const auto& r : historical) {
      if (idx(r.examinee) >= seen.size()) seen.resize(idx(r.examinee) + 1, 0);
      if (!seen[idx(r.examinee)]) {
        seen[idx(r.examinee)] = 1;
        ++examinees;
      }
    }
    result.skipped_examinees = examinees - groups.size();
  }
  if (groups.empty()) throw TrainingError("no historical examinee has at least two records");

  std::mt19937_64 rng(config.seed);

  // Negative samples follow record frequency^(3/4) over questions.
  std::vector<double> freq(num_questions, 0.0);
  for (const auto& g : groups) {
    for (const auto& r : g) freq[idx(r.question)] += 1.0;
  }
  for (auto& f : freq) f = std::pow(f, 0.75);
  std::discrete_distribution<std::size_t> negative(freq.begin(), freq.end());

  std::vector<double> input(2 * num_questions * d);
  std::uniform_real_distribution<double> init(-0.5 / double(d), 0.5 / double(d));
  for (auto& w : input) w = init(rng);
  std::vector<double> output(num_questions * d, 0.0);

  double pairs_per_epoch = 0.0;
  for (const auto& g : groups) {
    pairs_per_epoch += double(g.size()) * double(std::min(g.size() - 1, config.max_context));
  }
  const double total_pairs = pairs_per_epoch * double(config.epochs);
  double processed = 0.0;

  std::vector<std::size_t> group_order(groups.size());
  std::iota(group_order.begin(), group_order.end(), 0);
  std::vector<std::size_t> others;
  std::vector<double> hidden(d), grad_hidden(d);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(group_order.begin(), group_order.end(), rng);
    double objective = 0.0;
    double pairs = 0.0;
    for (std::size_t gi : group_order) {
      const auto& g = groups[gi];
      for (std::size_t c = 0; c < g.size(); ++c) {
        const std::size_t cq = idx(g[c].question);
        const bool correct = g[c].answer == 1;
        double* w_q = input.data() + cq * d;
        double* w_correct = input.data() + (num_questions + cq) * d;

        others.clear();
        for (std::size_t j = 0; j < g.size(); ++j) {
          if (j != c) others.push_back(j);
        }
        std::size_t n_ctx = others.size();
        if (n_ctx > config.max_context) {
          for (std::size_t i = 0; i < config.max_context; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, others.size() - 1);
            std::swap(others[i], others[pick(rng)]);
          }
          n_ctx = config.max_context;
        }

        for (std::size_t ci = 0; ci < n_ctx; ++ci) {
          const std::size_t target_q = idx(g[others[ci]].question);
          const double lr =
              config.learning_rate * std::max(1e-4, 1.0 - processed / total_pairs);
          processed += 1.0;

          for (std::size_t i = 0; i < d; ++i) hidden[i] = w_q[i] + (correct ? w_correct[i] : 0.0);
          std::fill(grad_hidden.begin(), grad_hidden.end(), 0.0);

          for (std::size_t s = 0; s <= config.negatives; ++s) {
            std::size_t tq;
            double label;
            if (s == 0) {
              tq = target_q;
              label = 1.0;
            } else {
              tq = negative(rng);
              if (tq == target_q) continue;
              label = 0.0;
            }
            double* v = output.data() + tq * d;
            double z = 0.0;
            for (std::size_t i = 0; i < d; ++i) z += hidden[i] * v[i];
            objective += label > 0 ? log_sigmoid(z) : log_sigmoid(-z);
            const double step = (label - sigmoid(z)) * lr;
            for (std::size_t i = 0; i < d; ++i) {
              grad_hidden[i] += step * v[i];
              v[i] += step * hidden[i];
            }
          }
          for (std::size_t i = 0; i < d; ++i) {
            w_q[i] += grad_hidden[i];
            if (correct) w_correct[i] += grad_hidden[i];
          }
          pairs += 1.0;
        }
      }
    }
    const double mean = objective / pairs;
    if (!std::isfinite(mean)) {
      throw TrainingError("embedding training diverged; lower learning_rate (currently " +
                          std::to_string(config.learning_rate) + ")");
    }
    result.epoch_objective.push_back(mean);
  }

  result.embedding = TestEffectEmbedding(num_questions, d, std::move(input), std::move(output));
  return result;
}

namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return std::sqrt(s);
}

} // namespace

double test_effect_similarity(const TestEffectEmbedding& emb, QuestionId qi, QuestionId qj,
                              double gamma) {
  if (!(gamma > 0.0)) throw ContractViolation("gamma must be positive");
  return std::exp(-gamma * distance(emb.vector(qi), emb.vector(qj)));
}

double test_effect_density(const TestEffectEmbedding& emb, QuestionId q, std::size_t k_n,
                           double gamma) {
  if (k_n == 0) throw ContractViolation("k_n must be at least 1");
  if (!(gamma > 0.0)) throw ContractViolation("gamma must be positive");
  if (emb.num_questions() < k_n + 1) {
    throw ContractViolation("density needs at least k_n + 1 = " + std::to_string(k_n + 1) +
                            " questions, pool has " + std::to_string(emb.num_questions()));
  }
  const auto self = emb.vector(q);
  std::vector<std::pair<double, std::size_t>> dists;
  dists.reserve(emb.num_questions() - 1);
  for (std::size_t j = 0; j < emb.num_questions(); ++j) {
    if (j == idx(q)) continue;
    dists.emplace_back(distance(self, emb.vector(question_id(j))), j);
  }
  std::partial_sort(dists.begin(), dists.begin() + std::ptrdiff_t(k_n), dists.end());
  double total = 0.0;
  for (std::size_t i = 0; i < k_n; ++i) total += std::exp(-gamma * dists[i].first);
  return total / double(k_n);
}

std::vector<double> test_effect_densities(const TestEffectEmbedding& emb, std::size_t k_n,
                                          double gamma) {
  std::vector<double> out(emb.num_questions());
  for (std::size_t q = 0; q < out.size(); ++q) {
    out[q] = test_effect_density(emb, question_id(q), k_n, gamma);
  }
  return out;
}

ImportanceTable compute_importance(const TestEffectEmbedding& emb, const ConceptGraph& graph,
                                   std::size_t k_n, double gamma) {
  if (emb.num_questions() != graph.num_questions()) {
    throw ContractViolation("embedding and graph disagree on the number of questions");
  }
  const auto density = test_effect_densities(emb, k_n, gamma);
  ImportanceTable table;
  table.meta = ImportanceMeta{gamma, k_n, emb.dim(), 0};
  table.weights.resize(graph.num_concepts());
  for (std::size_t k = 0; k < graph.num_concepts(); ++k) {
    const auto qs = graph.questions_of(concept_id(k));
    if (qs.empty()) throw ContractViolation("concept " + std::to_string(k) + " has no question");
    double total = 0.0;
    for (auto q : qs) total += density[idx(q)];
    table.weights[k] = total / double(qs.size());
  }
  return table;
}

ImportanceTable uniform_importance(std::size_t num_concepts) {
  ImportanceTable t;
  t.weights.assign(num_concepts, 1.0);
  return t;
}

json importance_to_json(const ImportanceTable& table) {
  json weights = json::object();
  for (std::size_t k = 0; k < table.weights.size(); ++k) weights[std::to_string(k)] = table.weights[k];
  return json{{"format", "maat-importance"},
              {"version", 1},
              {"weights", std::move(weights)},
              {"config",
               {{"gamma", table.meta.gamma},
                {"k_n", table.meta.k_n},
                {"dim", table.meta.dim},
                {"seed", table.meta.seed}}}};
}

ImportanceTable importance_from_json(const json& doc) {
  try {
    if (doc.at("format") != "maat-importance") throw ValidationError("not an importance table");
    ImportanceTable t;
    const auto& weights = doc.at("weights");
    t.weights.assign(weights.size(), 0.0);
    for (auto it = weights.begin(); it != weights.end(); ++it) {
      const std::size_t k = std::stoul(it.key());
      if (k >= t.weights.size()) throw ValidationError("importance table concept ids are not dense");
      t.weights[k] = it.value().get<double>();
    }
    for (double w : t.weights) {
      if (!(w > 0.0)) throw ValidationError("importance weights must be > 0");
    }
    const auto& cfg = doc.at("config");
    t.meta.gamma = cfg.at("gamma").get<double>();
    t.meta.k_n = cfg.at("k_n").get<std::size_t>();
    t.meta.dim = cfg.at("dim").get<std::size_t>();
    t.meta.seed = cfg.at("seed").get<std::uint64_t>();
    return t;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("importance table: ") + e.what());
  }
}

void save_importance(const std::filesystem::path& path, const ImportanceTable& table) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << importance_to_json(table).dump(2) << '\n';
}

ImportanceTable load_importance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return importance_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

} // namespace maat
