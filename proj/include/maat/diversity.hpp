#pragma once

#include "maat/environment.hpp"

#include <span>
#include <vector>

namespace maat {

/// cnt / (cnt + 1): soft per-concept coverage.
double inc_cov(std::size_t count) noexcept;

/// inc_cov(count + 1) - inc_cov(count), in closed form 1 / ((c + 1)(c + 2)).
double inc_cov_gain(std::size_t count) noexcept;

/// Fraction of concepts with at least one tested question (unweighted).
double nkc(std::span<const QuestionId> tested, const ConceptGraph& graph);

/// Running importance-weighted coverage of a tested set. Holds a non-owning
/// reference to the graph, which must outlive the state.
class CoverageState {
public:
  CoverageState(const ConceptGraph& graph, std::vector<double> weights);

  std::size_t cnt(ConceptId k) const;
  double iwkc() const noexcept { return weighted_sum_ / weight_total_; }
  /// IWKC(tested + q) - IWKC(tested); touches only q's concepts.
  double marginal_gain(QuestionId q) const;
  bool is_tested(QuestionId q) const;
  void add(QuestionId q);

  const ConceptGraph& graph() const noexcept { return *graph_; }
  std::span<const double> weights() const noexcept { return weights_; }
  const std::vector<QuestionId>& tested() const noexcept { return tested_; }

private:
  const ConceptGraph* graph_;
  std::vector<double> weights_;
  double weight_total_ = 0.0;
  double weighted_sum_ = 0.0;
  std::vector<std::size_t> counts_;
  std::vector<std::uint8_t> tested_flag_;
  std::vector<QuestionId> tested_;
};

/// IWKC of an arbitrary set, recomputed from scratch.
double iwkc(std::span<const QuestionId> tested, const ConceptGraph& graph,
            std::span<const double> weights);

/// Candidate with the largest marginal gain; ties go to the earliest
/// candidate in list order.
QuestionId select_diverse(const CoverageState& state, std::span<const QuestionId> candidates);

/// n greedy marginal-gain steps over `pool`, starting from an empty set.
/// Ties go to the earliest question in pool order. The lazy variant returns
/// the same sequence.
std::vector<QuestionId> greedy_maximize(const ConceptGraph& graph, std::span<const double> weights,
                                        std::span<const QuestionId> pool, std::size_t n,
                                        bool lazy = false);

struct Optimum {
  std::vector<QuestionId> best;
  double value = 0.0;
};

/// Exact n-subset maximizer of IWKC by enumeration. Throws CapacityError when
/// C(|pool|, n) exceeds one million.
Optimum brute_force_optimum(const ConceptGraph& graph, std::span<const double> weights,
                            std::span<const QuestionId> pool, std::size_t n);

} // namespace maat
