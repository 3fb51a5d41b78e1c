#include "maat/diversity.hpp"

#include "maat/errors.hpp"

#include <cmath>
#include <queue>
#include <string>

namespace maat {

double inc_cov(std::size_t count) noexcept {
  const double c = double(count);
  return c / (c + 1.0);
}

double inc_cov_gain(std::size_t count) noexcept {
  const double c = double(count);
  return 1.0 / ((c + 1.0) * (c + 2.0));
}

double nkc(std::span<const QuestionId> tested, const ConceptGraph& graph) {
  if (graph.num_concepts() == 0) return 0.0;
  std::vector<std::uint8_t> covered(graph.num_concepts(), 0);
  std::size_t n = 0;
  for (auto q : tested) {
    for (auto k : graph.concepts_of(q)) {
      if (!covered[idx(k)]) {
        covered[idx(k)] = 1;
        ++n;
      }
    }
  }
  return double(n) / double(graph.num_concepts());
}

CoverageState::CoverageState(const ConceptGraph& graph, std::vector<double> weights)
    : graph_(&graph),
      weights_(std::move(weights)),
      counts_(graph.num_concepts(), 0),
      tested_flag_(graph.num_questions(), 0) {
  if (weights_.size() != graph.num_concepts()) {
    throw ContractViolation("need one importance weight per concept (" +
                            std::to_string(graph.num_concepts()) + "), got " +
                            std::to_string(weights_.size()));
  }
  for (double w : weights_) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw ContractViolation("importance weights must be finite and > 0");
    }
    weight_total_ += w;
  }
}

std::size_t CoverageState::cnt(ConceptId k) const {
  if (idx(k) >= counts_.size()) throw LookupError("unknown concept " + std::to_string(idx(k)));
  return counts_[idx(k)];
}

bool CoverageState::is_tested(QuestionId q) const {
  if (idx(q) >= tested_flag_.size()) throw LookupError("unknown question " + std::to_string(idx(q)));
  return tested_flag_[idx(q)] != 0;
}

double CoverageState::marginal_gain(QuestionId q) const {
  if (is_tested(q)) {
    throw ContractViolation("question " + std::to_string(idx(q)) + " is already tested");
  }
  double gain = 0.0;
  for (auto k : graph_->concepts_of(q)) gain += weights_[idx(k)] * inc_cov_gain(counts_[idx(k)]);
  return gain / weight_total_;
}

void CoverageState::add(QuestionId q) {
  if (is_tested(q)) {
    throw ContractViolation("question " + std::to_string(idx(q)) + " is already tested");
  }
  for (auto k : graph_->concepts_of(q)) {
    weighted_sum_ += weights_[idx(k)] * inc_cov_gain(counts_[idx(k)]);
    ++counts_[idx(k)];
  }
  tested_flag_[idx(q)] = 1;
  tested_.push_back(q);
}

double iwkc(std::span<const QuestionId> tested, const ConceptGraph& graph,
            std::span<const double> weights) {
  if (weights.size() != graph.num_concepts()) {
    throw ContractViolation("need one importance weight per concept");
  }
  std::vector<std::size_t> counts(graph.num_concepts(), 0);
  for (auto q : tested) {
    for (auto k : graph.concepts_of(q)) ++counts[idx(k)];
  }
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    num += weights[k] * inc_cov(counts[k]);
    den += weights[k];
  }
  return num / den;
}

QuestionId select_diverse(const CoverageState& state, std::span<const QuestionId> candidates) {
  if (candidates.empty()) throw ContractViolation("select_diverse needs at least one candidate");
  QuestionId best = candidates.front();
  double best_gain = state.marginal_gain(best);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double gain = state.marginal_gain(candidates[i]);
    if (gain > best_gain) {
      best_gain = gain;
      best = candidates[i];
    }
  }
  return best;
}

namespace {

std::vector<QuestionId> greedy_eager(CoverageState& state, std::span<const QuestionId> pool,
                                     std::size_t n) {
  std::vector<std::uint8_t> used(pool.size(), 0);
  std::vector<QuestionId> out;
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t best = pool.size();
    double best_gain = -1.0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (used[i]) continue;
      const double gain = state.marginal_gain(pool[i]);
      if (gain > best_gain) {
        best_gain = gain;
        best = i;
      }
    }
    used[best] = 1;
    state.add(pool[best]);
    out.push_back(pool[best]);
  }
  return out;
}

// Gains only shrink as the set grows, so a stale gain is an upper bound. An
// entry whose gain was refreshed in the current round and still sits on top
// of the heap is the eager argmax; heap order (gain desc, position asc)
// reproduces the eager tie rule.
std::vector<QuestionId> greedy_lazy(CoverageState& state, std::span<const QuestionId> pool,
                                    std::size_t n) {
  struct Entry {
    double gain;
    std::size_t pos;
    std::size_t round;
  };
  auto lower = [](const Entry& x, const Entry& y) {
    if (x.gain != y.gain) return x.gain < y.gain;
    return x.pos > y.pos;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(lower)> heap(lower);
  for (std::size_t i = 0; i < pool.size(); ++i) heap.push({state.marginal_gain(pool[i]), i, 0});

  std::vector<QuestionId> out;
  for (std::size_t round = 0; round < n; ++round) {
    while (true) {
      Entry top = heap.top();
      heap.pop();
      if (top.round == round) {
        state.add(pool[top.pos]);
        out.push_back(pool[top.pos]);
        break;
      }
      heap.push({state.marginal_gain(pool[top.pos]), top.pos, round});
    }
  }
  return out;
}

} // namespace

std::vector<QuestionId> greedy_maximize(const ConceptGraph& graph, std::span<const double> weights,
                                        std::span<const QuestionId> pool, std::size_t n,
                                        bool lazy) {
  if (n > pool.size()) {
    throw ContractViolation("greedy_maximize: n = " + std::to_string(n) + " exceeds pool size " +
                            std::to_string(pool.size()));
  }
  CoverageState state(graph, std::vector<double>(weights.begin(), weights.end()));
  return lazy ? greedy_lazy(state, pool, n) : greedy_eager(state, pool, n);
}

namespace {

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * double(n - k + i) / double(i);
  return r;
}

} // namespace

Optimum brute_force_optimum(const ConceptGraph& graph, std::span<const double> weights,
                            std::span<const QuestionId> pool, std::size_t n) {
  if (n > pool.size()) throw ContractViolation("brute_force_optimum: n exceeds pool size");
  if (binomial(pool.size(), n) > 1e6) {
    throw CapacityError("brute_force_optimum: C(" + std::to_string(pool.size()) + ", " +
                        std::to_string(n) + ") exceeds 10^6 subsets");
  }

  Optimum best;
  best.value = -1.0;
  std::vector<std::size_t> pick(n);
  for (std::size_t i = 0; i < n; ++i) pick[i] = i;
  std::vector<QuestionId> subset(n);
  while (true) {
    for (std::size_t i = 0; i < n; ++i) subset[i] = pool[pick[i]];
    const double value = iwkc(subset, graph, weights);
    if (value > best.value) {
      best.value = value;
      best.best = subset;
    }
    // Next combination in lexicographic order.
    std::size_t i = n;
    while (i > 0 && pick[i - 1] == pool.size() - n + (i - 1)) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (std::size_t j = i; j < n; ++j) pick[j] = pick[j - 1] + 1;
  }
  return best;
}

} // namespace maat
