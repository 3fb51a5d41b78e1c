#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

namespace maat {

// Dense identifiers: values lie in [0, count) of their set.
enum class QuestionId : std::uint32_t {};
enum class ConceptId : std::uint32_t {};
enum class ExamineeId : std::uint32_t {};

constexpr std::size_t idx(QuestionId q) noexcept { return static_cast<std::size_t>(q); }
constexpr std::size_t idx(ConceptId k) noexcept { return static_cast<std::size_t>(k); }
constexpr std::size_t idx(ExamineeId e) noexcept { return static_cast<std::size_t>(e); }

constexpr QuestionId question_id(std::size_t i) noexcept {
  return QuestionId{static_cast<std::uint32_t>(i)};
}
constexpr ConceptId concept_id(std::size_t i) noexcept {
  return ConceptId{static_cast<std::uint32_t>(i)};
}
constexpr ExamineeId examinee_id(std::size_t i) noexcept {
  return ExamineeId{static_cast<std::uint32_t>(i)};
}

struct Record {
  ExamineeId examinee{};
  QuestionId question{};
  std::uint8_t answer = 0; // 1 = correct

  friend bool operator==(const Record&, const Record&) = default;
  friend auto operator<=>(const Record&, const Record&) = default;
};

/// The question-concept relation G. Every question links to at least one
/// concept and every concept to at least one question, unless built with
/// `unchecked`.
class ConceptGraph {
public:
  using Link = std::pair<QuestionId, ConceptId>;

  ConceptGraph() = default;
  ConceptGraph(std::size_t num_questions, std::size_t num_concepts, std::vector<Link> links);

  /// Skips the coverage invariants. Only meant for tests that need an
  /// unlinked question or concept.
  static ConceptGraph unchecked(std::size_t num_questions, std::size_t num_concepts,
                                std::vector<Link> links);

  std::size_t num_questions() const noexcept { return by_question_.size(); }
  std::size_t num_concepts() const noexcept { return by_concept_.size(); }
  std::size_t num_links() const noexcept { return links_.size(); }

  std::span<const ConceptId> concepts_of(QuestionId q) const;
  std::span<const QuestionId> questions_of(ConceptId k) const;
  bool contains(QuestionId q, ConceptId k) const;

  /// Sorted by (question, concept), duplicates removed.
  const std::vector<Link>& links() const noexcept { return links_; }

  friend bool operator==(const ConceptGraph& a, const ConceptGraph& b) {
    return a.links_ == b.links_ && a.num_questions() == b.num_questions() &&
           a.num_concepts() == b.num_concepts();
  }

private:
  void build(std::size_t num_questions, std::size_t num_concepts, std::vector<Link> links,
             bool check);

  std::vector<Link> links_;
  std::vector<std::vector<ConceptId>> by_question_;
  std::vector<std::vector<QuestionId>> by_concept_;
  std::unordered_set<std::uint64_t> membership_;
};

/// Static testing environment. Original identifiers from the source files are
/// kept so reports and saved datasets can use them.
struct Environment {
  ConceptGraph graph;
  std::vector<Record> records;
  std::size_t num_examinees = 0;
  std::vector<std::int64_t> question_labels;
  std::vector<std::int64_t> concept_labels;
  std::vector<std::int64_t> examinee_labels;

  std::size_t num_questions() const noexcept { return graph.num_questions(); }
  std::size_t num_concepts() const noexcept { return graph.num_concepts(); }

  /// Records grouped per examinee, each group in file order.
  std::vector<std::vector<Record>> records_by_examinee() const;
};

/// Builds an environment whose labels equal the dense ids.
Environment make_environment(ConceptGraph graph, std::vector<Record> records,
                             std::size_t num_examinees);

struct LoadReport {
  std::size_t dropped_questions = 0;
  std::size_t dropped_concepts = 0;
  std::size_t dropped_records = 0;
  std::size_t duplicate_records = 0;
};

/// Reads `records.csv` (examinee_id,question_id,answer) and `concepts.csv`
/// (question_id,concept_id) from `dir`. Questions without a concept and
/// concepts without a question are dropped and counted in `report`.
Environment load_dataset(const std::filesystem::path& dir, LoadReport* report = nullptr);

/// Writes the two CSV files using the environment's original labels.
void save_dataset(const Environment& env, const std::filesystem::path& dir);

struct FilterThresholds {
  std::size_t min_questions_per_concept = 0;
  std::size_t min_records_per_question = 0;
  std::size_t min_records_per_examinee = 0;
};

/// Removes entities below the thresholds until nothing else changes, then
/// re-indexes densely. Labels follow the surviving entities.
Environment filter_dataset(const Environment& env, const FilterThresholds& thresholds);

struct DatasetSplit {
  std::vector<ExamineeId> historical_examinees;
  std::vector<Record> historical_records;
  std::vector<ExamineeId> testing_examinees;
  std::vector<Record> testing_records;
};

/// Examinees with at least `min_testing_records` records form the testing
/// side; all others are historical. When `max_testing` is non-zero, a seeded
/// subsample of qualifying examinees is kept for testing and the rest are
/// moved to the historical side.
DatasetSplit split_dataset(const Environment& env, std::size_t min_testing_records,
                           std::uint64_t seed, std::size_t max_testing = 0);

/// Per-examinee dynamic status: the tested/untested partition and the answer
/// records in administration order.
class SessionState {
public:
  SessionState() = default;
  SessionState(ExamineeId examinee, std::size_t num_questions);

  static SessionState replay(ExamineeId examinee, std::size_t num_questions,
                             std::span<const Record> records);

  ExamineeId examinee() const noexcept { return examinee_; }
  std::size_t step() const noexcept { return tested_.size(); }
  std::size_t num_questions() const noexcept { return untested_flag_.size(); }

  const std::vector<QuestionId>& tested() const noexcept { return tested_; }
  const std::vector<Record>& records() const noexcept { return records_; }
  bool is_untested(QuestionId q) const;
  std::size_t num_untested() const noexcept { return num_untested_; }
  /// Ascending ids.
  std::vector<QuestionId> untested() const;

  /// Moves `q` from untested to tested and appends its record.
  void administer(QuestionId q, std::uint8_t answer);

private:
  ExamineeId examinee_{};
  std::vector<QuestionId> tested_;
  std::vector<Record> records_;
  std::vector<std::uint8_t> untested_flag_;
  std::size_t num_untested_ = 0;
};

/// Reads the seed override from MAAT_SEED, falling back to `fallback`.
std::uint64_t default_seed(std::uint64_t fallback = 42);

} // namespace maat
