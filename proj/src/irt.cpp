#include "cdm_fit.hpp"
#include "maat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace maat {

namespace {
constexpr double kMinDiscrimination = 0.1;
constexpr double kMaxDiscrimination = 4.0;
} // namespace

IrtModel::IrtModel(std::vector<double> discrimination, std::vector<double> difficulty)
    : a_(std::move(discrimination)), b_(std::move(difficulty)) {
  if (a_.size() != b_.size()) throw ValidationError("IRT parameter vectors differ in length");
  for (double a : a_) {
    if (!(a > 0.0) || !std::isfinite(a)) throw ValidationError("IRT discrimination must be > 0");
  }
}

double IrtModel::fisher_information(double theta, QuestionId q) const {
  check_question(q);
  const double a = a_[idx(q)];
  const double p = detail::sigmoid(a * (theta - b_[idx(q)]));
  return a * a * p * (1.0 - p);
}

double IrtModel::predict_unchecked(std::span<const double> theta, QuestionId q) const {
  return detail::sigmoid(a_[idx(q)] * (theta[0] - b_[idx(q)]));
}

void IrtModel::gradient_unchecked(std::span<const double> theta, QuestionId q, int answer,
                                  std::span<double> out) const {
  const double a = a_[idx(q)];
  const double p = detail::sigmoid(a * (theta[0] - b_[idx(q)]));
  out[0] = a * (p - double(answer));
}

namespace detail {

PretrainResult fit_irt(const ConceptGraph& graph, std::span<const Record> records,
                       const PretrainConfig& cfg) {
  const std::size_t nq = graph.num_questions();
  ExamineeSlots slots(records);

  // Difficulty starts at the negated logit of each question's correct rate.
  std::vector<double> correct(nq, 0.0), seen(nq, 0.0);
  for (const auto& r : records) {
    correct[idx(r.question)] += r.answer;
    seen[idx(r.question)] += 1.0;
  }
  std::vector<double> a(nq, 1.0), b(nq, 0.0);
  for (std::size_t q = 0; q < nq; ++q) {
    if (seen[q] > 0) {
      double rate = (correct[q] + 0.5) / (seen[q] + 1.0);
      b[q] = -std::log(rate / (1.0 - rate));
    }
  }
  std::vector<double> theta(slots.size(), 0.0);

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);

  PretrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t i : order) {
      const auto& r = records[i];
      const std::size_t q = idx(r.question);
      double& t = theta[slots(r.examinee)];
      const double p = sigmoid(a[q] * (t - b[q]));
      total += bce(p, r.answer);
      const double g = p - double(r.answer);
      const double dt = g * a[q] + cfg.ability_l2 * t;
      const double da = g * (t - b[q]);
      const double db = -g * a[q];
      t -= cfg.learning_rate * dt;
      a[q] = std::clamp(a[q] - cfg.learning_rate * da, kMinDiscrimination, kMaxDiscrimination);
      b[q] -= cfg.learning_rate * db;
    }
    const double mean = total / double(records.size());
    check_epoch_loss(mean, cfg, epoch);
    result.epoch_loss.push_back(mean);
  }
  for (std::size_t q = 0; q < nq; ++q) {
    if (!std::isfinite(a[q]) || !std::isfinite(b[q])) {
      throw TrainingError("pretraining produced non-finite IRT parameters; lower learning_rate");
    }
  }
  result.model = std::make_shared<IrtModel>(std::move(a), std::move(b));
  return result;
}

} // namespace detail

} // namespace maat
