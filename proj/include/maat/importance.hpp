#pragma once

#include "maat/environment.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace maat {

/// Sparse form of the 2|Q| response input: one-hot(question) followed by
/// one-hot(question) when correct, or by zeros when incorrect.
struct ResponseEncoding {
  QuestionId question{};
  bool correct = false;
  std::size_t num_questions = 0;

  /// Positions of the non-zero entries, ascending.
  std::vector<std::size_t> nonzeros() const;
  std::vector<double> dense() const;
};

ResponseEncoding encode_record(const Record& record, std::size_t num_questions);

struct SgnsConfig {
  std::size_t dim = 20;
  std::size_t negatives = 10;
  std::size_t epochs = 5;
  double learning_rate = 0.025;  // decays linearly to lr * 1e-4
  std::size_t max_context = 100; // context records sampled per center record
  std::uint64_t seed = 42;
};

/// Question embeddings learned from historical answer records. `vector(q)`
/// is the output (context) vector of question q.
class TestEffectEmbedding {
public:
  TestEffectEmbedding() = default;
  TestEffectEmbedding(std::size_t num_questions, std::size_t dim, std::vector<double> input,
                      std::vector<double> output);

  /// Embedding with the given per-question vectors and no input projection.
  static TestEffectEmbedding from_vectors(std::span<const std::vector<double>> vectors);

  std::size_t num_questions() const noexcept { return num_questions_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> vector(QuestionId q) const;
  /// Input projection W, stored column-major: column c (length dim) at c*dim.
  const std::vector<double>& input_projection() const noexcept { return input_; }

  friend bool operator==(const TestEffectEmbedding&, const TestEffectEmbedding&) = default;

private:
  std::size_t num_questions_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> input_;
  std::vector<double> output_;
};

struct EmbeddingTrainResult {
  TestEffectEmbedding embedding;
  std::vector<double> epoch_objective; // mean log-likelihood per positive pair
  std::size_t skipped_examinees = 0;   // fewer than two records
};

/// Skip-gram with negative sampling over each examinee's records: every
/// ordered pair of distinct records is a (center, context) example.
EmbeddingTrainResult train_embeddings(std::span<const Record> historical,
                                      std::size_t num_questions, const SgnsConfig& config);

/// exp(-gamma * ||v_i - v_j||).
double test_effect_similarity(const TestEffectEmbedding& emb, QuestionId qi, QuestionId qj,
                              double gamma);

/// Mean similarity to the k_n nearest other questions (Euclidean; distance
/// ties go to the smaller id).
double test_effect_density(const TestEffectEmbedding& emb, QuestionId q, std::size_t k_n,
                           double gamma);

/// Density of every question.
std::vector<double> test_effect_densities(const TestEffectEmbedding& emb, std::size_t k_n,
                                          double gamma);

struct ImportanceMeta {
  double gamma = 0.1;
  std::size_t k_n = 10;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
};

struct ImportanceTable {
  std::vector<double> weights; // indexed by concept
  ImportanceMeta meta;
};

/// w_k = mean density of the questions linked to concept k.
ImportanceTable compute_importance(const TestEffectEmbedding& emb, const ConceptGraph& graph,
                                   std::size_t k_n, double gamma);

/// Weight 1 for every concept (plain inc-cov coverage).
ImportanceTable uniform_importance(std::size_t num_concepts);

nlohmann::json importance_to_json(const ImportanceTable& table);
ImportanceTable importance_from_json(const nlohmann::json& doc);
void save_importance(const std::filesystem::path& path, const ImportanceTable& table);
ImportanceTable load_importance(const std::filesystem::path& path);

} // namespace maat
