#pragma once

#include "maat/cdm.hpp"

#include <span>
#include <vector>

namespace maat {

struct EmcScore {
  QuestionId question{};
  double score = 0.0;
};

/// Expected model change of administering `q`:
///   p * ||grad(answer = 1)|| + (1 - p) * ||grad(answer = 0)||
/// with p the model's own prediction and grad the BCE gradient w.r.t. theta.
EmcScore expected_model_change(const DiagnosisModel& model, std::span<const double> theta,
                               QuestionId q);

/// Top-k_c questions of `untested` by EMC, descending, ties by ascending id.
std::vector<QuestionId> select_candidates(const DiagnosisModel& model,
                                          std::span<const double> theta,
                                          std::span<const QuestionId> untested, std::size_t k_c);

/// EMC for every question in `pool`, in pool order.
std::vector<EmcScore> score_pool(const DiagnosisModel& model, std::span<const double> theta,
                                 std::span<const QuestionId> pool);

} // namespace maat
