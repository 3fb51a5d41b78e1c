#include "maat/environment.hpp"

#include "maat/errors.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>

namespace maat {

namespace {

std::uint64_t link_key(QuestionId q, ConceptId k) {
  return (static_cast<std::uint64_t>(idx(q)) << 32) | static_cast<std::uint64_t>(idx(k));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_row(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::int64_t parse_int(std::string_view cell, const std::string& file, std::size_t line,
                       const char* column) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
    throw ParseError(file, line, std::string("column '") + column + "' is not an integer: '" +
                                     std::string(cell) + "'");
  }
  return value;
}

// Reads a headed CSV with exactly `columns` integer columns.
std::vector<std::pair<std::size_t, std::vector<std::int64_t>>> read_int_csv(
    const std::filesystem::path& path, std::span<const char* const> columns) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  const std::string file = path.filename().string();

  std::vector<std::pair<std::size_t, std::vector<std::int64_t>>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_row(line);
    if (!header_seen) {
      header_seen = true;
      if (cells.size() != columns.size() || cells[0] != columns[0]) {
        throw ParseError(file, line_no, "expected header starting with '" +
                                            std::string(columns[0]) + "'");
      }
      continue;
    }
    if (cells.size() != columns.size()) {
      throw ParseError(file, line_no, "expected " + std::to_string(columns.size()) +
                                          " columns, got " + std::to_string(cells.size()));
    }
    std::vector<std::int64_t> values;
    values.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      values.push_back(parse_int(cells[c], file, line_no, columns[c]));
    }
    rows.emplace_back(line_no, std::move(values));
  }
  if (!header_seen) throw ParseError(file, 1, "missing header row");
  return rows;
}

// Dense re-indexing helper: label -> dense id in first-seen-sorted order.
struct Indexer {
  std::map<std::int64_t, std::size_t> ids;
  std::vector<std::int64_t> labels;

  void add(std::int64_t label) { ids.emplace(label, 0); }
  void finalize() {
    labels.clear();
    std::size_t next = 0;
    for (auto& [label, id] : ids) {
      id = next++;
      labels.push_back(label);
    }
  }
  std::size_t at(std::int64_t label) const { return ids.at(label); }
  bool has(std::int64_t label) const { return ids.count(label) != 0; }
};

} // namespace

// ---------------------------------------------------------------------------
// ConceptGraph

ConceptGraph::ConceptGraph(std::size_t num_questions, std::size_t num_concepts,
                           std::vector<Link> links) {
  build(num_questions, num_concepts, std::move(links), true);
}

ConceptGraph ConceptGraph::unchecked(std::size_t num_questions, std::size_t num_concepts,
                                     std::vector<Link> links) {
  ConceptGraph g;
  g.build(num_questions, num_concepts, std::move(links), false);
  return g;
}

void ConceptGraph::build(std::size_t num_questions, std::size_t num_concepts,
                         std::vector<Link> links, bool check) {
  std::sort(links.begin(), links.end());
  links.erase(std::unique(links.begin(), links.end()), links.end());
  by_question_.assign(num_questions, {});
  by_concept_.assign(num_concepts, {});
  membership_.clear();
  membership_.reserve(links.size() * 2);
  for (const auto& [q, k] : links) {
    if (idx(q) >= num_questions || idx(k) >= num_concepts) {
      throw ValidationError("concept link (" + std::to_string(idx(q)) + ", " +
                            std::to_string(idx(k)) + ") is out of range");
    }
    by_question_[idx(q)].push_back(k);
    by_concept_[idx(k)].push_back(q);
    membership_.insert(link_key(q, k));
  }
  if (check) {
    for (std::size_t q = 0; q < num_questions; ++q) {
      if (by_question_[q].empty()) {
        throw ValidationError("question " + std::to_string(q) + " has no related concept");
      }
    }
    for (std::size_t k = 0; k < num_concepts; ++k) {
      if (by_concept_[k].empty()) {
        throw ValidationError("concept " + std::to_string(k) + " has no related question");
      }
    }
  }
  links_ = std::move(links);
}

std::span<const ConceptId> ConceptGraph::concepts_of(QuestionId q) const {
  if (idx(q) >= by_question_.size()) {
    throw LookupError("unknown question " + std::to_string(idx(q)));
  }
  return by_question_[idx(q)];
}

std::span<const QuestionId> ConceptGraph::questions_of(ConceptId k) const {
  if (idx(k) >= by_concept_.size()) {
    throw LookupError("unknown concept " + std::to_string(idx(k)));
  }
  return by_concept_[idx(k)];
}

bool ConceptGraph::contains(QuestionId q, ConceptId k) const {
  return membership_.count(link_key(q, k)) != 0;
}

// ---------------------------------------------------------------------------
// Environment

std::vector<std::vector<Record>> Environment::records_by_examinee() const {
  std::vector<std::vector<Record>> grouped(num_examinees);
  for (const auto& r : records) grouped[idx(r.examinee)].push_back(r);
  return grouped;
}

Environment make_environment(ConceptGraph graph, std::vector<Record> records,
                             std::size_t num_examinees) {
  Environment env;
  env.question_labels.resize(graph.num_questions());
  env.concept_labels.resize(graph.num_concepts());
  env.examinee_labels.resize(num_examinees);
  for (std::size_t i = 0; i < env.question_labels.size(); ++i) env.question_labels[i] = std::int64_t(i);
  for (std::size_t i = 0; i < env.concept_labels.size(); ++i) env.concept_labels[i] = std::int64_t(i);
  for (std::size_t i = 0; i < env.examinee_labels.size(); ++i) env.examinee_labels[i] = std::int64_t(i);
  env.graph = std::move(graph);
  env.records = std::move(records);
  env.num_examinees = num_examinees;
  return env;
}

Environment load_dataset(const std::filesystem::path& dir, LoadReport* report) {
  static constexpr const char* record_cols[] = {"examinee_id", "question_id", "answer"};
  static constexpr const char* concept_cols[] = {"question_id", "concept_id"};

  auto record_rows = read_int_csv(dir / "records.csv", record_cols);
  auto concept_rows = read_int_csv(dir / "concepts.csv", concept_cols);
  if (record_rows.empty()) throw ValidationError("records.csv contains no records");

  for (const auto& [line, row] : record_rows) {
    if (row[2] != 0 && row[2] != 1) {
      throw ParseError("records.csv", line,
                       "answer must be 0 or 1, got " + std::to_string(row[2]));
    }
  }

  LoadReport local;
  // A question is kept only when it has a concept link; a concept only when a
  // kept question links to it.
  std::set<std::int64_t> linked_questions;
  std::set<std::int64_t> record_questions;
  for (const auto& [line, row] : concept_rows) linked_questions.insert(row[0]);
  for (const auto& [line, row] : record_rows) record_questions.insert(row[1]);

  Indexer questions, concepts, examinees;
  for (auto q : linked_questions) questions.add(q);
  for (const auto& [line, row] : concept_rows) concepts.add(row[1]);
  for (auto q : record_questions) {
    if (!linked_questions.count(q)) ++local.dropped_questions;
  }
  questions.finalize();
  concepts.finalize();

  std::vector<ConceptGraph::Link> links;
  links.reserve(concept_rows.size());
  for (const auto& [line, row] : concept_rows) {
    links.emplace_back(question_id(questions.at(row[0])), concept_id(concepts.at(row[1])));
  }

  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  std::vector<std::array<std::int64_t, 3>> kept;
  for (const auto& [line, row] : record_rows) {
    if (!questions.has(row[1])) {
      ++local.dropped_records;
      continue;
    }
    if (!seen.emplace(row[0], row[1]).second) {
      ++local.duplicate_records;
      continue;
    }
    examinees.add(row[0]);
    kept.push_back({row[0], row[1], row[2]});
  }
  examinees.finalize();
  if (kept.empty()) throw ValidationError("no records remain after dropping unlinked questions");

  Environment env;
  env.graph = ConceptGraph(questions.labels.size(), concepts.labels.size(), std::move(links));
  env.question_labels = questions.labels;
  env.concept_labels = concepts.labels;
  env.examinee_labels = examinees.labels;
  env.num_examinees = examinees.labels.size();
  env.records.reserve(kept.size());
  for (const auto& row : kept) {
    env.records.push_back(Record{examinee_id(examinees.at(row[0])),
                                 question_id(questions.at(row[1])),
                                 static_cast<std::uint8_t>(row[2])});
  }
  if (report) *report = local;
  return env;
}

void save_dataset(const Environment& env, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "records.csv");
    if (!out) throw ValidationError("cannot write " + (dir / "records.csv").string());
    out << "examinee_id,question_id,answer\n";
    for (const auto& r : env.records) {
      out << env.examinee_labels[idx(r.examinee)] << ',' << env.question_labels[idx(r.question)]
          << ',' << int(r.answer) << '\n';
    }
  }
  std::ofstream out(dir / "concepts.csv");
  if (!out) throw ValidationError("cannot write " + (dir / "concepts.csv").string());
  out << "question_id,concept_id\n";
  for (const auto& [q, k] : env.graph.links()) {
    out << env.question_labels[idx(q)] << ',' << env.concept_labels[idx(k)] << '\n';
  }
}

Environment filter_dataset(const Environment& env, const FilterThresholds& t) {
  const std::size_t nq = env.num_questions();
  const std::size_t nk = env.num_concepts();
  const std::size_t ne = env.num_examinees;

  std::vector<bool> q_alive(nq, true), k_alive(nk, true), e_alive(ne, true);

  bool changed = true;
  while (changed) {
    changed = false;

    std::vector<std::size_t> q_per_k(nk, 0), k_per_q(nq, 0);
    for (const auto& [q, k] : env.graph.links()) {
      if (q_alive[idx(q)] && k_alive[idx(k)]) {
        ++q_per_k[idx(k)];
        ++k_per_q[idx(q)];
      }
    }
    std::vector<std::size_t> rec_per_q(nq, 0), rec_per_e(ne, 0);
    for (const auto& r : env.records) {
      if (q_alive[idx(r.question)] && e_alive[idx(r.examinee)]) {
        ++rec_per_q[idx(r.question)];
        ++rec_per_e[idx(r.examinee)];
      }
    }

    for (std::size_t k = 0; k < nk; ++k) {
      if (k_alive[k] && (q_per_k[k] == 0 || q_per_k[k] < t.min_questions_per_concept)) {
        k_alive[k] = false;
        changed = true;
      }
    }
    for (std::size_t q = 0; q < nq; ++q) {
      if (q_alive[q] && (k_per_q[q] == 0 || rec_per_q[q] < t.min_records_per_question)) {
        q_alive[q] = false;
        changed = true;
      }
    }
    for (std::size_t e = 0; e < ne; ++e) {
      if (e_alive[e] && rec_per_e[e] < t.min_records_per_examinee) {
        e_alive[e] = false;
        changed = true;
      }
    }
    // A concept that lost all of its questions in this pass is caught on the
    // next iteration through q_per_k.
  }

  auto remap = [](const std::vector<bool>& alive) {
    std::vector<std::int64_t> map(alive.size(), -1);
    std::int64_t next = 0;
    for (std::size_t i = 0; i < alive.size(); ++i) {
      if (alive[i]) map[i] = next++;
    }
    return std::pair{map, static_cast<std::size_t>(next)};
  };
  auto [q_map, nq2] = remap(q_alive);
  auto [k_map, nk2] = remap(k_alive);
  auto [e_map, ne2] = remap(e_alive);
  if (nq2 == 0 || nk2 == 0 || ne2 == 0) {
    throw ValidationError("filtering removed every question, concept or examinee");
  }

  std::vector<ConceptGraph::Link> links;
  for (const auto& [q, k] : env.graph.links()) {
    if (q_alive[idx(q)] && k_alive[idx(k)]) {
      links.emplace_back(question_id(std::size_t(q_map[idx(q)])),
                         concept_id(std::size_t(k_map[idx(k)])));
    }
  }

  Environment out;
  out.graph = ConceptGraph(nq2, nk2, std::move(links));
  out.num_examinees = ne2;
  for (const auto& r : env.records) {
    if (q_alive[idx(r.question)] && e_alive[idx(r.examinee)]) {
      out.records.push_back(Record{examinee_id(std::size_t(e_map[idx(r.examinee)])),
                                   question_id(std::size_t(q_map[idx(r.question)])), r.answer});
    }
  }
  for (std::size_t i = 0; i < nq; ++i) {
    if (q_alive[i]) out.question_labels.push_back(env.question_labels[i]);
  }
  for (std::size_t i = 0; i < nk; ++i) {
    if (k_alive[i]) out.concept_labels.push_back(env.concept_labels[i]);
  }
  for (std::size_t i = 0; i < ne; ++i) {
    if (e_alive[i]) out.examinee_labels.push_back(env.examinee_labels[i]);
  }
  return out;
}

DatasetSplit split_dataset(const Environment& env, std::size_t min_testing_records,
                           std::uint64_t seed, std::size_t max_testing) {
  std::vector<std::size_t> counts(env.num_examinees, 0);
  for (const auto& r : env.records) ++counts[idx(r.examinee)];

  std::vector<ExamineeId> qualifying;
  for (std::size_t e = 0; e < env.num_examinees; ++e) {
    if (counts[e] >= min_testing_records) qualifying.push_back(examinee_id(e));
  }
  if (qualifying.empty()) {
    throw ValidationError("no examinee has at least " + std::to_string(min_testing_records) +
                          " records; the testing side would be empty");
  }
  if (max_testing != 0 && qualifying.size() > max_testing) {
    std::mt19937_64 rng(seed);
    std::shuffle(qualifying.begin(), qualifying.end(), rng);
    qualifying.resize(max_testing);
    std::sort(qualifying.begin(), qualifying.end());
  }

  std::vector<bool> testing(env.num_examinees, false);
  for (auto e : qualifying) testing[idx(e)] = true;

  DatasetSplit split;
  split.testing_examinees = qualifying;
  for (std::size_t e = 0; e < env.num_examinees; ++e) {
    if (!testing[e] && counts[e] > 0) split.historical_examinees.push_back(examinee_id(e));
  }
  for (const auto& r : env.records) {
    (testing[idx(r.examinee)] ? split.testing_records : split.historical_records).push_back(r);
  }
  return split;
}

// ---------------------------------------------------------------------------
// SessionState

SessionState::SessionState(ExamineeId examinee, std::size_t num_questions)
    : examinee_(examinee), untested_flag_(num_questions, 1), num_untested_(num_questions) {}

SessionState SessionState::replay(ExamineeId examinee, std::size_t num_questions,
                                  std::span<const Record> records) {
  SessionState s(examinee, num_questions);
  for (const auto& r : records) {
    if (r.examinee != examinee) {
      throw ContractViolation("replayed record belongs to a different examinee");
    }
    s.administer(r.question, r.answer);
  }
  return s;
}

bool SessionState::is_untested(QuestionId q) const {
  if (idx(q) >= untested_flag_.size()) {
    throw LookupError("unknown question " + std::to_string(idx(q)));
  }
  return untested_flag_[idx(q)] != 0;
}

std::vector<QuestionId> SessionState::untested() const {
  std::vector<QuestionId> out;
  out.reserve(num_untested_);
  for (std::size_t i = 0; i < untested_flag_.size(); ++i) {
    if (untested_flag_[i]) out.push_back(question_id(i));
  }
  return out;
}

void SessionState::administer(QuestionId q, std::uint8_t answer) {
  if (!is_untested(q)) {
    throw ContractViolation("question " + std::to_string(idx(q)) + " was already administered");
  }
  if (answer > 1) throw ContractViolation("answer must be 0 or 1");
  untested_flag_[idx(q)] = 0;
  --num_untested_;
  tested_.push_back(q);
  records_.push_back(Record{examinee_, q, answer});
}

std::uint64_t default_seed(std::uint64_t fallback) {
  if (const char* env = std::getenv("MAAT_SEED")) {
    std::uint64_t value = 0;
    std::string_view s(env);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec == std::errc{} && ptr == s.data() + s.size()) return value;
  }
  return fallback;
}

} // namespace maat
