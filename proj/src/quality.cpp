#include "maat/quality.hpp"

#include "maat/errors.hpp"

#include <algorithm>
#include <cmath>

namespace maat {

namespace {

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

} // namespace

EmcScore expected_model_change(const DiagnosisModel& model, std::span<const double> theta,
                               QuestionId q) {
  Ability grad(model.ability_dim());
  const double p = model.predict(theta, q);
  model.loss_gradient(theta, q, 1, grad);
  const double change_if_correct = l2_norm(grad);
  model.loss_gradient(theta, q, 0, grad);
  const double change_if_wrong = l2_norm(grad);
  return EmcScore{q, p * change_if_correct + (1.0 - p) * change_if_wrong};
}

std::vector<EmcScore> score_pool(const DiagnosisModel& model, std::span<const double> theta,
                                 std::span<const QuestionId> pool) {
  std::vector<EmcScore> scores;
  scores.reserve(pool.size());
  for (auto q : pool) scores.push_back(expected_model_change(model, theta, q));
  return scores;
}

std::vector<QuestionId> select_candidates(const DiagnosisModel& model,
                                          std::span<const double> theta,
                                          std::span<const QuestionId> untested,
                                          std::size_t k_c) {
  if (k_c == 0) throw ContractViolation("k_c must be at least 1");
  if (untested.empty()) throw ContractViolation("no untested question to score");

  auto scores = score_pool(model, theta, untested);
  const std::size_t keep = std::min(k_c, scores.size());
  auto better = [](const EmcScore& x, const EmcScore& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.question < y.question;
  };
  std::partial_sort(scores.begin(), scores.begin() + std::ptrdiff_t(keep), scores.end(), better);

  std::vector<QuestionId> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(scores[i].question);
  return out;
}

} // namespace maat
