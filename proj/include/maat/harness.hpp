#pragma once

#include "maat/cdm.hpp"
#include "maat/engine.hpp"
#include "maat/environment.hpp"
#include "maat/importance.hpp"
#include "maat/strategy.hpp"
#include "maat/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace maat {

/// Source of the examinee's answers during a simulated test.
struct AnswerOracle {
  std::function<std::uint8_t(QuestionId, std::size_t step)> answer;
  /// Per question id, non-zero where an answer exists. Empty: every question.
  std::vector<std::uint8_t> known;
};

/// Answers from recorded data; only recorded questions can be administered.
AnswerOracle replay_oracle(std::span<const Record> records, std::size_t num_questions);
/// The t-th administered question gets answers[t], whatever it is.
AnswerOracle scripted_oracle(std::vector<std::uint8_t> answers);
/// Bernoulli(predict) draws from a generating model; each question's draw
/// depends only on (seed, question).
AnswerOracle simulated_oracle(std::shared_ptr<const DiagnosisModel> truth, Ability theta,
                              std::uint64_t seed);

struct SessionTrace {
  std::vector<QuestionId> questions;
  std::vector<std::uint8_t> answers;
  Ability initial_theta;
  std::vector<Ability> thetas; // thetas[t]: estimate after t + 1 answers
  std::vector<double> iwkc;    // running IWKC after each step
};

/// Runs the full test loop: select, observe, update, until the configured
/// length. Throws PoolExhausted if the oracle runs out of answerable
/// questions first.
SessionTrace run_session(std::shared_ptr<const DiagnosisModel> model,
                         std::shared_ptr<const ConceptGraph> graph, std::vector<double> weights,
                         std::shared_ptr<const Strategy> strategy, const AnswerOracle& oracle,
                         ExamineeId examinee, const SessionConfig& config);

/// One (strategy, model) arm of an experiment. `label` names the arm in
/// reports, e.g. "maat@kc=1" for ablation runs.
struct RunPair {
  std::string strategy;
  ModelKind model = ModelKind::irt;
  std::size_t k_c = 10; // 0 = whole pool
  std::string label;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::vector<std::string> strategies{"maat", "rand"};
  std::vector<ModelKind> models{ModelKind::irt};
  std::vector<RunPair> pairs;         // explicit arms; overrides strategies x models
  std::vector<std::size_t> ablation_kc; // extra maat arms per model (0 = whole pool)

  std::size_t test_length = 50;
  std::size_t k_c = 10;
  std::uint64_t seed = 42;

  std::optional<std::filesystem::path> dataset; // otherwise `synthetic` is generated
  SyntheticSpec synthetic;
  FilterThresholds filter;
  std::size_t min_testing_records = 150;
  std::size_t max_testing = 0;

  std::vector<std::size_t> auc_steps{5, 10, 15, 20, 25, 50};
  bool auc_include_administered = false;

  PretrainConfig pretrain;
  UpdateConfig update;
  UpdateConfig reference_update{0.5, 500}; // full-record fit used as the SEE reference
  SgnsConfig sgns;
  double gamma = 0.1;
  std::size_t k_n = 10;
  bool uniform_importance = false;
  std::optional<std::filesystem::path> importance_path;

  StrategyOptions strategy_options;
  std::size_t threads = 0; // 0 = hardware concurrency

  /// Throws ConfigError on invalid values.
  void validate() const;
};

/// Arms of the experiment, validated for compatibility. Throws ConfigError
/// listing every incompatible pair.
std::vector<RunPair> expand_pairs(const ExperimentConfig& config);

/// Data, pretrained models and importance weights shared by every arm.
struct PreparedExperiment {
  Environment env;
  DatasetSplit split;
  std::shared_ptr<const ConceptGraph> graph;
  std::optional<SyntheticTruth> truth;
  std::map<ModelKind, std::shared_ptr<const DiagnosisModel>> models;
  std::map<ModelKind, std::vector<double>> pretrain_loss;
  ImportanceTable importance;
  std::vector<std::vector<Record>> testing_records;      // per testing examinee
  std::map<ModelKind, std::vector<Ability>> references;  // SEE reference per testing examinee
};

PreparedExperiment prepare_experiment(const ExperimentConfig& config);

/// True when SEE for `kind` is measured against the generating abilities:
/// synthetic data whose generator matches the model kind and dimension.
/// Otherwise the reference is a fit on the examinee's full record set.
bool truth_is_reference(const PreparedExperiment& prep, ModelKind kind);

struct RunRow {
  std::string strategy;
  std::string model;
  std::int64_t examinee = 0; // original label
  std::size_t step = 0;
  std::string metric; // auc | cov | see
  double value = 0.0;
};

struct CurvePoint {
  std::string strategy;
  std::string model;
  std::size_t step = 0;
  std::string metric;
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};

struct UndefinedAuc {
  std::string strategy;
  std::string model;
  std::size_t step = 0;
  std::size_t count = 0;
};

/// AUC over every (examinee, question) evaluation pair of an arm at once.
struct PooledAuc {
  std::string strategy;
  std::string model;
  std::size_t step = 0;
  std::optional<double> value;
};

struct ExperimentReport {
  std::vector<RunRow> rows;
  std::vector<CurvePoint> curves;
  std::vector<UndefinedAuc> undefined_auc;
  std::vector<PooledAuc> pooled_auc;
  nlohmann::json metadata;

  /// Curve value or nullopt when absent.
  std::optional<CurvePoint> find(std::string_view strategy, std::string_view model,
                                 std::size_t step, std::string_view metric) const;
};

ExperimentReport run_experiment(const ExperimentConfig& config, const PreparedExperiment& prepared);
ExperimentReport run_experiment(const ExperimentConfig& config);

/// Groups rows by (strategy, model, step, metric), sorted, and reduces each
/// group in row order: mean and standard error sd / sqrt(n).
std::vector<CurvePoint> aggregate(std::span<const RunRow> rows);

/// Shortest round-trip decimal form of `x`.
std::string format_double(double x);

void write_runs_csv(std::span<const RunRow> rows, const std::filesystem::path& path);
std::vector<RunRow> read_runs_csv(const std::filesystem::path& path);
void write_curves_csv(std::span<const CurvePoint> curves, const std::filesystem::path& path);
nlohmann::json report_to_json(const ExperimentReport& report);

/// Writes runs.csv, curves.csv and report.json into `dir`.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

} // namespace maat
