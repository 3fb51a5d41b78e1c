#include "maat/cdm.hpp"

#include "cdm_fit.hpp"
#include "maat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace maat {

std::string_view to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::irt: return "irt";
    case ModelKind::mirt: return "mirt";
    case ModelKind::ncdm: return "ncdm";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "irt") return ModelKind::irt;
  if (name == "mirt") return ModelKind::mirt;
  if (name == "ncdm") return ModelKind::ncdm;
  throw ConfigError("unknown model kind '" + std::string(name) + "' (expected irt, mirt or ncdm)");
}

namespace detail {

double bce(double p, int answer) {
  constexpr double eps = 1e-12;
  p = std::clamp(p, eps, 1.0 - eps);
  return answer ? -std::log(p) : -std::log1p(-p);
}

} // namespace detail

void DiagnosisModel::check_question(QuestionId q) const {
  if (idx(q) >= num_questions()) {
    throw LookupError("unknown question " + std::to_string(idx(q)) + " (pool has " +
                      std::to_string(num_questions()) + ")");
  }
}

void DiagnosisModel::check_ability(std::span<const double> theta) const {
  if (theta.size() != ability_dim()) {
    throw ContractViolation("ability has dimension " + std::to_string(theta.size()) +
                            ", model expects " + std::to_string(ability_dim()));
  }
}

double DiagnosisModel::predict(std::span<const double> theta, QuestionId q) const {
  check_question(q);
  check_ability(theta);
  return predict_unchecked(theta, q);
}

Ability DiagnosisModel::loss_gradient(std::span<const double> theta, QuestionId q,
                                      int answer) const {
  Ability out(ability_dim(), 0.0);
  loss_gradient(theta, q, answer, out);
  return out;
}

void DiagnosisModel::loss_gradient(std::span<const double> theta, QuestionId q, int answer,
                                   std::span<double> out) const {
  check_question(q);
  check_ability(theta);
  if (answer != 0 && answer != 1) throw ContractViolation("hypothesized answer must be 0 or 1");
  if (out.size() != ability_dim()) throw ContractViolation("gradient buffer has wrong size");
  gradient_unchecked(theta, q, answer, out);
}

double DiagnosisModel::loss(std::span<const double> theta, std::span<const Record> records) const {
  if (records.empty()) return 0.0;
  check_ability(theta);
  double total = 0.0;
  for (const auto& r : records) {
    check_question(r.question);
    total += detail::bce(predict_unchecked(theta, r.question), r.answer);
  }
  return total / double(records.size());
}

void DiagnosisModel::project(std::span<double>) const {}

Ability DiagnosisModel::update(Ability theta, std::span<const Record> records,
                               const UpdateConfig& config) const {
  check_ability(theta);
  if (records.empty()) return theta;
  const ExamineeId owner = records.front().examinee;
  for (const auto& r : records) {
    if (r.examinee != owner) throw ContractViolation("update records span several examinees");
    check_question(r.question);
  }

  const std::size_t dim = ability_dim();
  Ability grad(dim), scratch(dim), candidate(dim);
  double current = loss(theta, records);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (const auto& r : records) {
      gradient_unchecked(theta, r.question, r.answer, scratch);
      for (std::size_t i = 0; i < dim; ++i) grad[i] += scratch[i];
    }
    for (auto& g : grad) {
      g /= double(records.size());
      if (!std::isfinite(g)) {
        throw TrainingError("ability update diverged; lower update learning_rate (currently " +
                            std::to_string(config.learning_rate) + ")");
      }
    }

    double step = config.learning_rate;
    bool accepted = false;
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt, step *= 0.5) {
      for (std::size_t i = 0; i < dim; ++i) candidate[i] = theta[i] - step * grad[i];
      project(candidate);
      double next = loss(candidate, records);
      if (next <= current) {
        theta.swap(candidate);
        current = next;
        accepted = true;
      }
    }
    if (!accepted) break;
  }
  return theta;
}

PretrainConfig PretrainConfig::resolved(ModelKind kind) const {
  PretrainConfig out = *this;
  switch (kind) {
    case ModelKind::irt:
      if (out.epochs == 0) out.epochs = 40;
      if (out.learning_rate == 0.0) out.learning_rate = 0.05;
      break;
    case ModelKind::mirt:
      if (out.epochs == 0) out.epochs = 40;
      if (out.learning_rate == 0.0) out.learning_rate = 0.05;
      break;
    case ModelKind::ncdm:
      if (out.epochs == 0) out.epochs = 40;
      if (out.learning_rate == 0.0) out.learning_rate = 0.1;
      break;
  }
  return out;
}

PretrainResult pretrain(ModelKind kind, const ConceptGraph& graph,
                        std::span<const Record> historical, const PretrainConfig& config) {
  if (historical.empty()) throw TrainingError("cannot pretrain on an empty historical set");
  for (const auto& r : historical) {
    if (idx(r.question) >= graph.num_questions()) {
      throw TrainingError("historical record references unknown question " +
                          std::to_string(idx(r.question)));
    }
  }
  const PretrainConfig cfg = config.resolved(kind);
  if (!(cfg.learning_rate > 0.0)) throw TrainingError("learning_rate must be positive");
  switch (kind) {
    case ModelKind::irt: return detail::fit_irt(graph, historical, cfg);
    case ModelKind::mirt: return detail::fit_mirt(graph, historical, cfg);
    case ModelKind::ncdm: return detail::fit_ncdm(graph, historical, cfg);
  }
  throw ConfigError("unknown model kind");
}

namespace detail {

ExamineeSlots::ExamineeSlots(std::span<const Record> records) {
  for (const auto& r : records) {
    auto [it, inserted] = slot_of.emplace(idx(r.examinee), slot_of.size());
    (void)it;
    (void)inserted;
  }
}

std::size_t ExamineeSlots::operator()(ExamineeId e) const { return slot_of.at(idx(e)); }

void check_epoch_loss(double loss, const PretrainConfig& cfg, std::size_t epoch) {
  if (!std::isfinite(loss)) {
    throw TrainingError("pretraining diverged at epoch " + std::to_string(epoch + 1) +
                        " (loss is not finite); lower learning_rate (currently " +
                        std::to_string(cfg.learning_rate) + ")");
  }
}

} // namespace detail

} // namespace maat
