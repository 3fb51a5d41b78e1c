#include "maat/metrics.hpp"

#include "maat/diversity.hpp"
#include "maat/errors.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace maat {

std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ContractViolation("auc: scores and labels differ in size");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * double(i + 1 + j); // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        positive_rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double np = double(positives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * double(negatives));
}

std::optional<double> auc_informativeness(const DiagnosisModel& model,
                                          std::span<const double> theta,
                                          std::span<const Record> eval_records) {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  scores.reserve(eval_records.size());
  labels.reserve(eval_records.size());
  for (const auto& r : eval_records) {
    scores.push_back(model.predict(theta, r.question));
    labels.push_back(r.answer);
  }
  return auc(scores, labels);
}

double coverage_metric(std::span<const QuestionId> tested, const ConceptGraph& graph) {
  return nkc(tested, graph);
}

double squared_error(std::span<const double> theta, std::span<const double> reference) {
  if (theta.size() != reference.size()) {
    throw ContractViolation("ability dimension mismatch: " + std::to_string(theta.size()) +
                            " vs " + std::to_string(reference.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double d = theta[i] - reference[i];
    s += d * d;
  }
  return s;
}

double see_metric(std::span<const Ability> estimated, std::span<const Ability> reference) {
  if (estimated.size() != reference.size()) {
    throw ContractViolation("see_metric: examinee counts differ");
  }
  if (estimated.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < estimated.size(); ++i) s += squared_error(estimated[i], reference[i]);
  return s / double(estimated.size());
}

} // namespace maat
