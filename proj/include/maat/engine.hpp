#pragma once

#include "maat/cdm.hpp"
#include "maat/diversity.hpp"
#include "maat/environment.hpp"
#include "maat/strategy.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace maat {

struct SessionConfig {
  std::size_t test_length = 50;
  std::uint64_t seed = 42;
  UpdateConfig update;
};

/// One adaptive test: session state, current theta and coverage, driven by a
/// strategy. The harness and the HTTP service both run tests through this
/// class, so a given (seed, strategy, model, answers) yields the same
/// questions in either place.
class CatSession {
public:
  CatSession(std::shared_ptr<const DiagnosisModel> model,
             std::shared_ptr<const ConceptGraph> graph, std::vector<double> weights,
             std::shared_ptr<const Strategy> strategy, ExamineeId examinee, SessionConfig config);

  /// Rebuilds a session by re-running `records` through observe().
  static CatSession restore(std::shared_ptr<const DiagnosisModel> model,
                            std::shared_ptr<const ConceptGraph> graph, std::vector<double> weights,
                            std::shared_ptr<const Strategy> strategy, ExamineeId examinee,
                            SessionConfig config, std::span<const Record> records);

  /// Next question from the untested pool. A non-empty `allowed` (indexed by
  /// question id) further restricts the pool to entries that are non-zero.
  /// Throws PoolExhausted when nothing is selectable and ContractViolation
  /// once the test is finished.
  QuestionId select_next(std::span<const std::uint8_t> allowed = {}) const;

  /// Records the answer to `q`, extends coverage and refits theta.
  void observe(QuestionId q, std::uint8_t answer);

  bool finished() const noexcept { return state_.step() >= config_.test_length; }
  std::size_t step() const noexcept { return state_.step(); }

  const SessionState& state() const noexcept { return state_; }
  const Ability& theta() const noexcept { return theta_; }
  const CoverageState& coverage() const noexcept { return coverage_; }
  const DiagnosisModel& model() const noexcept { return *model_; }
  const ConceptGraph& graph() const noexcept { return *graph_; }
  const Strategy& strategy() const noexcept { return *strategy_; }
  const SessionConfig& config() const noexcept { return config_; }

private:
  std::shared_ptr<const DiagnosisModel> model_;
  std::shared_ptr<const ConceptGraph> graph_;
  std::shared_ptr<const Strategy> strategy_;
  SessionConfig config_;
  SessionState state_;
  CoverageState coverage_;
  Ability theta_;
};

} // namespace maat
