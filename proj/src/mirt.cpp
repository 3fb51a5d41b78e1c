#include "cdm_fit.hpp"
#include "maat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace maat {

namespace {
constexpr double kMaxDiscrimination = 4.0;
} // namespace

MirtModel::MirtModel(std::size_t dim, std::vector<double> discrimination,
                     std::vector<double> intercept)
    : dim_(dim), a_(std::move(discrimination)), intercept_(std::move(intercept)) {
  if (dim_ == 0) throw ValidationError("MIRT dimension must be at least 1");
  if (a_.size() != dim_ * intercept_.size()) {
    throw ValidationError("MIRT discrimination matrix has wrong size");
  }
  for (double a : a_) {
    if (!(a >= 0.0) || !std::isfinite(a)) {
      throw ValidationError("MIRT discrimination entries must be finite and >= 0");
    }
  }
}

std::span<const double> MirtModel::discrimination(QuestionId q) const {
  check_question(q);
  return std::span<const double>(a_).subspan(idx(q) * dim_, dim_);
}

double MirtModel::predict_unchecked(std::span<const double> theta, QuestionId q) const {
  const double* a = a_.data() + idx(q) * dim_;
  double z = intercept_[idx(q)];
  for (std::size_t i = 0; i < dim_; ++i) z += a[i] * theta[i];
  return detail::sigmoid(z);
}

void MirtModel::gradient_unchecked(std::span<const double> theta, QuestionId q, int answer,
                                   std::span<double> out) const {
  const double g = predict_unchecked(theta, q) - double(answer);
  const double* a = a_.data() + idx(q) * dim_;
  for (std::size_t i = 0; i < dim_; ++i) out[i] = g * a[i];
}

namespace detail {

PretrainResult fit_mirt(const ConceptGraph& graph, std::span<const Record> records,
                        const PretrainConfig& cfg) {
  const std::size_t nq = graph.num_questions();
  const std::size_t dim = cfg.mirt_dim;
  if (dim == 0) throw TrainingError("mirt_dim must be at least 1");
  ExamineeSlots slots(records);
  std::mt19937_64 rng(cfg.seed);

  std::vector<double> correct(nq, 0.0), seen(nq, 0.0);
  for (const auto& r : records) {
    correct[idx(r.question)] += r.answer;
    seen[idx(r.question)] += 1.0;
  }
  std::vector<double> intercept(nq, 0.0);
  for (std::size_t q = 0; q < nq; ++q) {
    if (seen[q] > 0) {
      double rate = (correct[q] + 0.5) / (seen[q] + 1.0);
      intercept[q] = std::log(rate / (1.0 - rate));
    }
  }
  std::uniform_real_distribution<double> a_init(0.3, 1.0);
  std::vector<double> a(nq * dim);
  for (auto& v : a) v = a_init(rng);
  std::normal_distribution<double> theta_init(0.0, 0.1);
  std::vector<double> theta(slots.size() * dim);
  for (auto& v : theta) v = theta_init(rng);

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);

  PretrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t i : order) {
      const auto& r = records[i];
      const std::size_t q = idx(r.question);
      double* t = theta.data() + slots(r.examinee) * dim;
      double* aq = a.data() + q * dim;
      double z = intercept[q];
      for (std::size_t k = 0; k < dim; ++k) z += aq[k] * t[k];
      const double p = sigmoid(z);
      total += bce(p, r.answer);
      const double g = p - double(r.answer);
      for (std::size_t k = 0; k < dim; ++k) {
        const double dt = g * aq[k] + cfg.ability_l2 * t[k];
        const double da = g * t[k];
        t[k] -= cfg.learning_rate * dt;
        aq[k] = std::clamp(aq[k] - cfg.learning_rate * da, 0.0, kMaxDiscrimination);
      }
      intercept[q] -= cfg.learning_rate * g;
    }
    const double mean = total / double(records.size());
    check_epoch_loss(mean, cfg, epoch);
    result.epoch_loss.push_back(mean);
  }
  result.model = std::make_shared<MirtModel>(dim, std::move(a), std::move(intercept));
  return result;
}

} // namespace detail

} // namespace maat
