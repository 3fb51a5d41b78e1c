#include "maat/errors.hpp"
#include "maat/strategy.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace maat {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

QuestionId rand_select(std::span<const QuestionId> selectable, std::uint64_t seed,
                       std::size_t step) {
  if (selectable.empty()) throw ContractViolation("rand_select: empty pool");
  return selectable[mix_seed(seed, step) % selectable.size()];
}

namespace {

void require_pool(std::span<const QuestionId> pool, const char* who) {
  if (pool.empty()) throw ContractViolation(std::string(who) + ": empty pool");
}

template <class Score>
QuestionId argmax(std::span<const QuestionId> pool, Score&& score) {
  QuestionId best = pool.front();
  double best_score = score(best);
  for (std::size_t i = 1; i < pool.size(); ++i) {
    const double s = score(pool[i]);
    if (s > best_score) {
      best_score = s;
      best = pool[i];
    }
  }
  return best;
}

double radius(std::size_t answered) { return 3.0 / std::sqrt(double(answered)); }

} // namespace

double bernoulli_kl(double p, double q) {
  auto term = [](double x, double y) { return x > 0.0 ? x * std::log(x / y) : 0.0; };
  return term(p, q) + term(1.0 - p, 1.0 - q);
}

QuestionId mfi_select(const IrtModel& model, double theta, std::span<const QuestionId> selectable) {
  require_pool(selectable, "mfi_select");
  return argmax(selectable, [&](QuestionId q) { return model.fisher_information(theta, q); });
}

double kli_score(const IrtModel& model, double theta_hat, QuestionId q, double delta,
                 std::size_t points) {
  if (points < 2) throw ContractViolation("quadrature needs at least two points");
  const double a = model.discrimination(q);
  const double b = model.difficulty(q);
  const double p_hat = detail::sigmoid(a * (theta_hat - b));
  const double h = 2.0 * delta / double(points - 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double theta = theta_hat - delta + h * double(i);
    const double w = (i == 0 || i + 1 == points) ? 0.5 : 1.0;
    sum += w * bernoulli_kl(p_hat, detail::sigmoid(a * (theta - b)));
  }
  // Euler-Maclaurin end correction; d/dtheta KL(p_hat || P(theta)) = a (P(theta) - p_hat).
  const double slope_hi = a * (detail::sigmoid(a * (theta_hat + delta - b)) - p_hat);
  const double slope_lo = a * (detail::sigmoid(a * (theta_hat - delta - b)) - p_hat);
  return sum * h - h * h / 12.0 * (slope_hi - slope_lo);
}

QuestionId kli_select(const IrtModel& model, double theta_hat, std::size_t answered,
                      std::span<const QuestionId> selectable, std::size_t points) {
  require_pool(selectable, "kli_select");
  if (answered == 0) return mfi_select(model, theta_hat, selectable);
  const double delta = radius(answered);
  return argmax(selectable,
                [&](QuestionId q) { return kli_score(model, theta_hat, q, delta, points); });
}

namespace {

Eigen::MatrixXd information(const MirtModel& model, std::span<const double> theta,
                            QuestionId q) {
  const auto a = model.discrimination(q);
  const double p = model.predict(theta, q);
  Eigen::Map<const Eigen::VectorXd> av(a.data(), Eigen::Index(a.size()));
  return p * (1.0 - p) * av * av.transpose();
}

Eigen::MatrixXd test_information(const MirtModel& model, std::span<const double> theta,
                                 std::span<const QuestionId> administered, double ridge) {
  const auto d = Eigen::Index(model.ability_dim());
  Eigen::MatrixXd f = ridge * Eigen::MatrixXd::Identity(d, d);
  for (auto q : administered) f += information(model, theta, q);
  return f;
}

} // namespace

double dopt_score(const MirtModel& model, std::span<const double> theta,
                  std::span<const QuestionId> administered, QuestionId q, double ridge) {
  const Eigen::MatrixXd f = test_information(model, theta, administered, ridge);
  return (f + information(model, theta, q)).determinant();
}

QuestionId dopt_select(const MirtModel& model, std::span<const double> theta,
                       std::span<const QuestionId> administered,
                       std::span<const QuestionId> selectable, double ridge) {
  require_pool(selectable, "dopt_select");
  const Eigen::MatrixXd f = test_information(model, theta, administered, ridge);
  return argmax(selectable,
                [&](QuestionId q) { return (f + information(model, theta, q)).determinant(); });
}

double mkli_score(const MirtModel& model, std::span<const double> theta_hat, QuestionId q,
                  double delta, std::size_t points) {
  const std::size_t dim = model.ability_dim();
  if (dim > 3) {
    throw CapacityError("mkli: tensor quadrature supports at most 3 dimensions, model has " +
                        std::to_string(dim));
  }
  if (points < 2) throw ContractViolation("quadrature needs at least two points");
  const auto a = model.discrimination(q);
  const double z_hat = [&] {
    double z = model.intercept(q);
    for (std::size_t k = 0; k < dim; ++k) z += a[k] * theta_hat[k];
    return z;
  }();
  const double p_hat = detail::sigmoid(z_hat);
  const double h = 2.0 * delta / double(points - 1);

  // Per-axis offsets a_k * (theta_k - theta_hat_k) and trapezoid weights.
  std::vector<double> node_w(points);
  for (std::size_t i = 0; i < points; ++i) node_w[i] = (i == 0 || i + 1 == points) ? 0.5 : 1.0;
  std::vector<std::vector<double>> shift(dim, std::vector<double>(points));
  for (std::size_t k = 0; k < dim; ++k) {
    for (std::size_t i = 0; i < points; ++i) shift[k][i] = a[k] * (-delta + h * double(i));
  }

  std::size_t total = 1;
  for (std::size_t k = 0; k < dim; ++k) total *= points;
  std::vector<std::size_t> at(dim, 0);
  double sum = 0.0;
  // Per-axis Euler-Maclaurin end correction: the axis-k derivative of the
  // integrand is a_k (P - p_hat), integrated over the other axes by trapezoid.
  double slope = 0.0;
  for (std::size_t n = 0; n < total; ++n) {
    double z = z_hat, w = 1.0;
    for (std::size_t k = 0; k < dim; ++k) {
      z += shift[k][at[k]];
      w *= node_w[at[k]];
    }
    const double p = detail::sigmoid(z);
    sum += w * bernoulli_kl(p_hat, p);
    for (std::size_t k = 0; k < dim; ++k) {
      if (at[k] == 0) slope -= 2.0 * w * a[k] * (p - p_hat);
      if (at[k] + 1 == points) slope += 2.0 * w * a[k] * (p - p_hat);
    }
    for (std::size_t k = 0; k < dim; ++k) {
      if (++at[k] < points) break;
      at[k] = 0;
    }
  }
  const double cell = std::pow(h, double(dim - 1));
  return sum * cell * h - h * h / 12.0 * slope * cell;
}

QuestionId mkli_select(const MirtModel& model, std::span<const double> theta_hat,
                       std::span<const QuestionId> administered,
                       std::span<const QuestionId> selectable, std::size_t points, double ridge) {
  require_pool(selectable, "mkli_select");
  if (model.ability_dim() > 3) {
    throw CapacityError("mkli: tensor quadrature supports at most 3 dimensions");
  }
  if (administered.empty()) return dopt_select(model, theta_hat, administered, selectable, ridge);
  const double delta = radius(administered.size());
  return argmax(selectable,
                [&](QuestionId q) { return mkli_score(model, theta_hat, q, delta, points); });
}

} // namespace maat
