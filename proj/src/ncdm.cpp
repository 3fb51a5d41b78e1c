#include "cdm_fit.hpp"
#include "maat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace maat {

namespace {
constexpr double kDiscScale = 10.0;
} // namespace

NeuralCdmLite::NeuralCdmLite(const ConceptGraph& graph, Parameters params)
    : params_(std::move(params)) {
  const std::size_t nq = graph.num_questions();
  const std::size_t nk = params_.num_concepts;
  const std::size_t nh = params_.hidden;
  if (nk != graph.num_concepts()) throw ValidationError("NCDM concept count does not match graph");
  if (params_.w1.size() != nh * nk || params_.b1.size() != nh || params_.w2.size() != nh ||
      params_.raw_diff.size() != nq * nk || params_.raw_disc.size() != nq) {
    throw ValidationError("NCDM parameter shapes are inconsistent");
  }
  for (double w : params_.w1) {
    if (!(w >= 0.0)) throw ValidationError("NCDM interaction weights must be >= 0");
  }
  for (double w : params_.w2) {
    if (!(w >= 0.0)) throw ValidationError("NCDM interaction weights must be >= 0");
  }
  masks_.resize(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    auto ks = graph.concepts_of(question_id(q));
    masks_[q].assign(ks.begin(), ks.end());
  }
}

void NeuralCdmLite::project(std::span<double> theta) const {
  for (auto& t : theta) t = std::clamp(t, 0.0, 1.0);
}

NeuralCdmLite::Forward NeuralCdmLite::forward(std::span<const double> theta, QuestionId q) const {
  const std::size_t nk = params_.num_concepts;
  const std::size_t nh = params_.hidden;
  Forward f;
  f.x.assign(nk, 0.0);
  f.h.assign(nh, 0.0);
  f.disc = kDiscScale * detail::sigmoid(params_.raw_disc[idx(q)]);
  const double* raw_diff = params_.raw_diff.data() + idx(q) * nk;
  for (ConceptId k : masks_[idx(q)]) {
    f.x[idx(k)] = f.disc * (theta[idx(k)] - detail::sigmoid(raw_diff[idx(k)]));
  }
  double z2 = params_.b2;
  for (std::size_t h = 0; h < nh; ++h) {
    const double* row = params_.w1.data() + h * nk;
    double u = params_.b1[h];
    for (ConceptId k : masks_[idx(q)]) u += row[idx(k)] * f.x[idx(k)];
    f.h[h] = detail::sigmoid(u);
    z2 += params_.w2[h] * f.h[h];
  }
  f.p = detail::sigmoid(z2);
  return f;
}

double NeuralCdmLite::predict_unchecked(std::span<const double> theta, QuestionId q) const {
  return forward(theta, q).p;
}

void NeuralCdmLite::gradient_unchecked(std::span<const double> theta, QuestionId q, int answer,
                                       std::span<double> out) const {
  const std::size_t nk = params_.num_concepts;
  const Forward f = forward(theta, q);
  const double d2 = f.p - double(answer);
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t h = 0; h < params_.hidden; ++h) {
    const double dh = d2 * params_.w2[h] * f.h[h] * (1.0 - f.h[h]);
    const double* row = params_.w1.data() + h * nk;
    for (ConceptId k : masks_[idx(q)]) out[idx(k)] += dh * row[idx(k)];
  }
  for (ConceptId k : masks_[idx(q)]) out[idx(k)] *= f.disc;
}

namespace detail {

PretrainResult fit_ncdm(const ConceptGraph& graph, std::span<const Record> records,
                        const PretrainConfig& cfg) {
  const std::size_t nq = graph.num_questions();
  const std::size_t nk = graph.num_concepts();
  const std::size_t nh = cfg.ncdm_hidden;
  if (nh == 0) throw TrainingError("ncdm_hidden must be at least 1");
  ExamineeSlots slots(records);
  std::mt19937_64 rng(cfg.seed);

  NeuralCdmLite::Parameters P;
  P.num_concepts = nk;
  P.hidden = nh;
  std::uniform_real_distribution<double> w_init(0.0, 0.3);
  P.w1.resize(nh * nk);
  for (auto& w : P.w1) w = w_init(rng);
  P.b1.assign(nh, 0.0);
  P.w2.resize(nh);
  for (auto& w : P.w2) w = w_init(rng);

  double rate = 0.0;
  for (const auto& r : records) rate += r.answer;
  rate = (rate + 0.5) / (double(records.size()) + 1.0);
  // Hidden units start near 0.5, so centre the output on the base rate.
  P.b2 = std::log(rate / (1.0 - rate)) - 0.5 * std::accumulate(P.w2.begin(), P.w2.end(), 0.0);
  P.raw_diff.assign(nq * nk, 0.0);
  P.raw_disc.assign(nq, 0.0);

  std::vector<double> theta(slots.size() * nk, 0.5);
  std::vector<std::vector<ConceptId>> masks(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    auto ks = graph.concepts_of(question_id(q));
    masks[q].assign(ks.begin(), ks.end());
  }

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> x(nk), h(nh), back(nk);
  const double lr = cfg.learning_rate;

  PretrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t i : order) {
      const auto& r = records[i];
      const std::size_t q = idx(r.question);
      double* t = theta.data() + slots(r.examinee) * nk;
      double* raw_diff = P.raw_diff.data() + q * nk;
      const auto& mask = masks[q];

      const double sd = sigmoid(P.raw_disc[q]);
      const double disc = 10.0 * sd;
      for (ConceptId k : mask) x[idx(k)] = disc * (t[idx(k)] - sigmoid(raw_diff[idx(k)]));
      double z2 = P.b2;
      for (std::size_t j = 0; j < nh; ++j) {
        const double* row = P.w1.data() + j * nk;
        double u = P.b1[j];
        for (ConceptId k : mask) u += row[idx(k)] * x[idx(k)];
        h[j] = sigmoid(u);
        z2 += P.w2[j] * h[j];
      }
      const double p = sigmoid(z2);
      total += bce(p, r.answer);
      const double d2 = p - double(r.answer);

      for (ConceptId k : mask) back[idx(k)] = 0.0;
      for (std::size_t j = 0; j < nh; ++j) {
        const double dh = d2 * P.w2[j] * h[j] * (1.0 - h[j]);
        double* row = P.w1.data() + j * nk;
        for (ConceptId k : mask) {
          back[idx(k)] += dh * row[idx(k)];
          row[idx(k)] = std::max(0.0, row[idx(k)] - lr * dh * x[idx(k)]);
        }
        P.b1[j] -= lr * dh;
        P.w2[j] = std::max(0.0, P.w2[j] - lr * d2 * h[j]);
      }
      P.b2 -= lr * d2;

      double d_disc = 0.0;
      for (ConceptId k : mask) {
        const std::size_t c = idx(k);
        const double s = sigmoid(raw_diff[c]);
        d_disc += back[c] * (t[c] - s);
        raw_diff[c] -= lr * back[c] * (-disc * s * (1.0 - s));
        const double dt = back[c] * disc + cfg.ability_l2 * (t[c] - 0.5);
        t[c] = std::clamp(t[c] - lr * dt, 0.0, 1.0);
      }
      P.raw_disc[q] -= lr * d_disc * 10.0 * sd * (1.0 - sd);
    }
    const double mean = total / double(records.size());
    check_epoch_loss(mean, cfg, epoch);
    result.epoch_loss.push_back(mean);
  }
  result.model = std::make_shared<NeuralCdmLite>(graph, std::move(P));
  return result;
}

} // namespace detail

} // namespace maat
