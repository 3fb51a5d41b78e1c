#pragma once

// Shared fixtures for the unit tests and the acceptance runner.

#include "maat/cdm.hpp"
#include "maat/environment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace maat::testing {

inline std::vector<QuestionId> all_questions(std::size_t n) {
  std::vector<QuestionId> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(question_id(i));
  return out;
}

/// Random relation where every question has 1..max_links concepts and every
/// concept at least one question.
inline ConceptGraph random_graph(std::mt19937_64& rng, std::size_t nq, std::size_t nk,
                                 std::size_t max_links = 3) {
  std::vector<ConceptGraph::Link> links;
  for (std::size_t k = 0; k < nk; ++k) links.emplace_back(question_id(k % nq), concept_id(k));
  std::uniform_int_distribution<std::size_t> count(1, max_links), pick(0, nk - 1);
  for (std::size_t q = 0; q < nq; ++q) {
    const std::size_t c = count(rng);
    for (std::size_t i = 0; i < c; ++i) links.emplace_back(question_id(q), concept_id(pick(rng)));
  }
  return ConceptGraph(nq, nk, std::move(links));
}

inline std::vector<double> random_weights(std::mt19937_64& rng, std::size_t nk) {
  std::uniform_real_distribution<double> u(0.05, 2.0);
  std::vector<double> w(nk);
  for (auto& x : w) x = u(rng);
  return w;
}

inline std::shared_ptr<IrtModel> random_irt(std::mt19937_64& rng, std::size_t nq) {
  std::uniform_real_distribution<double> ua(0.3, 2.5), ub(-2.0, 2.0);
  std::vector<double> a(nq), b(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    a[i] = ua(rng);
    b[i] = ub(rng);
  }
  return std::make_shared<IrtModel>(a, b);
}

inline std::shared_ptr<MirtModel> random_mirt(std::mt19937_64& rng, std::size_t nq, std::size_t dim) {
  std::uniform_real_distribution<double> ua(0.0, 2.0), ud(-1.5, 1.5);
  std::vector<double> a(nq * dim), d(nq);
  for (auto& x : a) x = ua(rng);
  for (auto& x : d) x = ud(rng);
  return std::make_shared<MirtModel>(dim, a, d);
}

inline std::shared_ptr<NeuralCdmLite> random_ncdm(std::mt19937_64& rng, const ConceptGraph& graph,
                                                  std::size_t hidden = 8) {
  std::uniform_real_distribution<double> uw(0.0, 1.0), us(-1.0, 1.0), ur(-2.0, 2.0);
  NeuralCdmLite::Parameters p;
  p.num_concepts = graph.num_concepts();
  p.hidden = hidden;
  p.w1.resize(hidden * p.num_concepts);
  for (auto& x : p.w1) x = uw(rng);
  p.b1.resize(hidden);
  for (auto& x : p.b1) x = us(rng);
  p.w2.resize(hidden);
  for (auto& x : p.w2) x = uw(rng);
  p.b2 = us(rng);
  p.raw_diff.resize(graph.num_questions() * p.num_concepts);
  for (auto& x : p.raw_diff) x = ur(rng);
  p.raw_disc.resize(graph.num_questions());
  for (auto& x : p.raw_disc) x = ur(rng);
  return std::make_shared<NeuralCdmLite>(graph, std::move(p));
}

inline Ability random_theta(std::mt19937_64& rng, const DiagnosisModel& model) {
  Ability theta(model.ability_dim());
  if (model.kind() == ModelKind::ncdm) {
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (auto& x : theta) x = u(rng);
  } else {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (auto& x : theta) x = u(rng);
  }
  return theta;
}

/// Central finite differences of the BCE loss with step h.
inline Ability fd_gradient(const DiagnosisModel& model, Ability theta, QuestionId q, int answer,
                           double h = 1e-5) {
  Ability g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double x = theta[i];
    theta[i] = x + h;
    const double up = detail::bce(model.predict(theta, q), answer);
    theta[i] = x - h;
    const double down = detail::bce(model.predict(theta, q), answer);
    theta[i] = x;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||analytic - numeric|| / max(||numeric||, floor).
inline double relative_error(const Ability& analytic, const Ability& numeric, double floor = 1e-6) {
  double diff = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    norm += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(norm), floor);
}

inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) r[order[k]] = 0.5 * double(i + j - 1);
    i = j;
  }
  return r;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = ranks(x), ry = ranks(y);
  const double n = double(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("maat_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace maat::testing
