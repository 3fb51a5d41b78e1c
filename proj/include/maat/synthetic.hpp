#pragma once

#include "maat/cdm.hpp"
#include "maat/environment.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace maat {

/// Population and item-bank generator settings. A zero standard deviation
/// pins the corresponding parameter to its mean.
struct SyntheticSpec {
  std::size_t num_examinees = 200;
  std::size_t num_questions = 300;
  std::size_t num_concepts = 20;
  std::size_t min_concepts_per_question = 1;
  std::size_t max_concepts_per_question = 3;
  double zipf_exponent = 1.0; // concept popularity ~ 1 / rank^s

  std::size_t min_records_per_examinee = 50;
  std::size_t max_records_per_examinee = 250;

  ModelKind generator = ModelKind::irt; // irt or mirt
  std::size_t mirt_dim = 3;

  double log_discrimination_mean = 0.0;
  double log_discrimination_sd = 0.3;
  double discrimination_min = 0.5;
  double discrimination_max = 2.5;
  double difficulty_mean = 0.0;
  double difficulty_sd = 1.0;
  double ability_mean = 0.0;
  double ability_sd = 1.0;

  std::uint64_t seed = 42;

  /// Throws ValidationError on impossible settings.
  void validate() const;
};

/// Generator parameters. For irt, `discrimination` and `difficulty` hold
/// (a_j, b_j); for mirt, `discrimination` is row-major Q x dim and
/// `difficulty` holds the intercepts d_j.
struct SyntheticTruth {
  ModelKind kind = ModelKind::irt;
  std::size_t dim = 1;
  std::vector<double> discrimination;
  std::vector<double> difficulty;
  std::vector<Ability> abilities; // per examinee

  /// The generating model itself.
  std::shared_ptr<const DiagnosisModel> model() const;
};

struct SyntheticData {
  Environment env;
  SyntheticTruth truth;
};

/// Draws G, item parameters, abilities and Bernoulli answers. Every concept
/// is linked to at least one question (concept k first goes to question
/// k mod |Q|), and each examinee answers a uniform random subset of the
/// pool.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

nlohmann::json truth_to_json(const SyntheticTruth& truth);
SyntheticTruth truth_from_json(const nlohmann::json& doc);

/// Writes records.csv, concepts.csv and truth.json to `dir`.
void save_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

} // namespace maat
