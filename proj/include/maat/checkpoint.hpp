#pragma once

#include "maat/cdm.hpp"
#include "maat/environment.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>

namespace maat {

/// A pretrained model together with the concept graph it was built for.
struct Checkpoint {
  std::shared_ptr<const DiagnosisModel> model;
  ConceptGraph graph;
  nlohmann::json config;
};

inline constexpr int kCheckpointVersion = 1;

/// Schema (version 1):
///   {"format": "maat-model", "version": 1, "kind": "irt"|"mirt"|"ncdm",
///    "num_questions": Q, "num_concepts": K,
///    "concepts": [[concept ids of question 0], ...],
///    "config": {...free-form training config...},
///    "parameters": {...kind specific, see README...}}
nlohmann::json checkpoint_to_json(const DiagnosisModel& model, const ConceptGraph& graph,
                                  const nlohmann::json& config = nlohmann::json::object());
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const DiagnosisModel& model,
                     const ConceptGraph& graph,
                     const nlohmann::json& config = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace maat
