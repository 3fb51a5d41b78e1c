#include "maat/engine.hpp"

#include "maat/errors.hpp"

#include <string>

namespace maat {

CatSession::CatSession(std::shared_ptr<const DiagnosisModel> model,
                       std::shared_ptr<const ConceptGraph> graph, std::vector<double> weights,
                       std::shared_ptr<const Strategy> strategy, ExamineeId examinee,
                       SessionConfig config)
    : model_(std::move(model)),
      graph_(std::move(graph)),
      strategy_(std::move(strategy)),
      config_(config),
      state_(examinee, graph_->num_questions()),
      coverage_(*graph_, std::move(weights)),
      theta_(model_->initial_ability()) {
  if (model_->num_questions() != graph_->num_questions()) {
    throw ContractViolation("model has " + std::to_string(model_->num_questions()) +
                            " questions but the concept graph has " +
                            std::to_string(graph_->num_questions()));
  }
  if (config_.test_length == 0) throw ValidationError("test length must be at least 1");
  check_compatible(*strategy_, model_->kind());
}

CatSession CatSession::restore(std::shared_ptr<const DiagnosisModel> model,
                               std::shared_ptr<const ConceptGraph> graph,
                               std::vector<double> weights,
                               std::shared_ptr<const Strategy> strategy, ExamineeId examinee,
                               SessionConfig config, std::span<const Record> records) {
  CatSession session(std::move(model), std::move(graph), std::move(weights), std::move(strategy),
                     examinee, config);
  for (const auto& r : records) session.observe(r.question, r.answer);
  return session;
}

QuestionId CatSession::select_next(std::span<const std::uint8_t> allowed) const {
  if (finished()) throw ContractViolation("the test is already finished");
  if (!allowed.empty() && allowed.size() != graph_->num_questions()) {
    throw ContractViolation("allowed mask must have one entry per question");
  }
  std::vector<QuestionId> pool;
  pool.reserve(state_.num_untested());
  for (std::size_t i = 0; i < graph_->num_questions(); ++i) {
    const auto q = question_id(i);
    if (state_.is_untested(q) && (allowed.empty() || allowed[i])) pool.push_back(q);
  }
  if (pool.empty()) {
    throw PoolExhausted("no selectable question left at step " + std::to_string(state_.step()));
  }
  const SelectionContext ctx{*model_, theta_, state_, pool, coverage_, config_.seed};
  return strategy_->select(ctx);
}

void CatSession::observe(QuestionId q, std::uint8_t answer) {
  if (finished()) throw ContractViolation("the test is already finished");
  if (answer > 1) throw ValidationError("answer must be 0 or 1");
  state_.administer(q, answer);
  coverage_.add(q);
  theta_ = model_->update(std::move(theta_), state_.records(), config_.update);
}

} // namespace maat
