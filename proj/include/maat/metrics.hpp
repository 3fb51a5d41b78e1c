#pragma once

#include "maat/cdm.hpp"
#include "maat/environment.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace maat {

/// Mann-Whitney AUC with average ranks for ties. Empty when either class is
/// missing.
std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// AUC of the model's predictions for `theta` against the recorded answers.
std::optional<double> auc_informativeness(const DiagnosisModel& model,
                                          std::span<const double> theta,
                                          std::span<const Record> eval_records);

/// Proportion of concepts touched by `tested`.
double coverage_metric(std::span<const QuestionId> tested, const ConceptGraph& graph);

/// ||theta - reference||^2. Throws ContractViolation on a dimension mismatch.
double squared_error(std::span<const double> theta, std::span<const double> reference);

/// Mean squared L2 error over examinees.
double see_metric(std::span<const Ability> estimated, std::span<const Ability> reference);

} // namespace maat
