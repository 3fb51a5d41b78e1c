#pragma once

#include "maat/environment.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace maat {

enum class ModelKind { irt, mirt, ncdm };

std::string_view to_string(ModelKind kind) noexcept;
/// Throws ConfigError on an unknown name.
ModelKind parse_model_kind(std::string_view name);

/// Examinee-state parameters (theta), flat.
using Ability = std::vector<double>;

struct UpdateConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 5;
};

/// Cognitive diagnosis model contract. Question-side parameters are frozen
/// once built; examinee state is passed in and returned by value so a single
/// model can serve many sessions at once.
class DiagnosisModel {
public:
  virtual ~DiagnosisModel() = default;

  virtual ModelKind kind() const noexcept = 0;
  virtual std::size_t num_questions() const noexcept = 0;
  virtual std::size_t ability_dim() const noexcept = 0;
  virtual Ability initial_ability() const = 0;

  /// Probability of a correct answer, in [0, 1].
  double predict(std::span<const double> theta, QuestionId q) const;

  /// d BCE(predict, answer) / d theta.
  Ability loss_gradient(std::span<const double> theta, QuestionId q, int answer) const;
  void loss_gradient(std::span<const double> theta, QuestionId q, int answer,
                     std::span<double> out) const;

  /// Mean binary cross-entropy over `records`; 0 for an empty list.
  double loss(std::span<const double> theta, std::span<const Record> records) const;

  /// Refits theta on one examinee's records by full-batch gradient descent,
  /// warm-started from `theta`. The step is halved whenever it would raise
  /// the loss, so the returned state never fits worse than the input.
  Ability update(Ability theta, std::span<const Record> records, const UpdateConfig& config) const;

  /// Maps theta back into the model's feasible set (no-op unless bounded).
  virtual void project(std::span<double> theta) const;

protected:
  void check_question(QuestionId q) const;
  void check_ability(std::span<const double> theta) const;

  virtual double predict_unchecked(std::span<const double> theta, QuestionId q) const = 0;
  virtual void gradient_unchecked(std::span<const double> theta, QuestionId q, int answer,
                                  std::span<double> out) const = 0;
};

/// 2PL: P = sigmoid(a (theta - b)), scalar theta.
class IrtModel final : public DiagnosisModel {
public:
  IrtModel(std::vector<double> discrimination, std::vector<double> difficulty);

  ModelKind kind() const noexcept override { return ModelKind::irt; }
  std::size_t num_questions() const noexcept override { return a_.size(); }
  std::size_t ability_dim() const noexcept override { return 1; }
  Ability initial_ability() const override { return {0.0}; }

  double discrimination(QuestionId q) const { return a_.at(idx(q)); }
  double difficulty(QuestionId q) const { return b_.at(idx(q)); }
  const std::vector<double>& discriminations() const noexcept { return a_; }
  const std::vector<double>& difficulties() const noexcept { return b_; }

  /// Lord's item information a^2 P (1 - P).
  double fisher_information(double theta, QuestionId q) const;

private:
  double predict_unchecked(std::span<const double> theta, QuestionId q) const override;
  void gradient_unchecked(std::span<const double> theta, QuestionId q, int answer,
                          std::span<double> out) const override;

  std::vector<double> a_;
  std::vector<double> b_;
};

/// Compensatory multidimensional 2PL: P = sigmoid(a . theta + d).
class MirtModel final : public DiagnosisModel {
public:
  /// `discrimination` is row-major, num_questions x dim.
  MirtModel(std::size_t dim, std::vector<double> discrimination, std::vector<double> intercept);

  ModelKind kind() const noexcept override { return ModelKind::mirt; }
  std::size_t num_questions() const noexcept override { return intercept_.size(); }
  std::size_t ability_dim() const noexcept override { return dim_; }
  Ability initial_ability() const override { return Ability(dim_, 0.0); }

  std::span<const double> discrimination(QuestionId q) const;
  double intercept(QuestionId q) const { return intercept_.at(idx(q)); }
  const std::vector<double>& discriminations() const noexcept { return a_; }
  const std::vector<double>& intercepts() const noexcept { return intercept_; }

private:
  double predict_unchecked(std::span<const double> theta, QuestionId q) const override;
  void gradient_unchecked(std::span<const double> theta, QuestionId q, int answer,
                          std::span<double> out) const override;

  std::size_t dim_;
  std::vector<double> a_;
  std::vector<double> intercept_;
};

/// Small monotone neural CDM. Theta is a mastery vector in [0,1]^|K|.
///   x = disc_q * mask_q (.) (theta - diff_q)
///   h = sigmoid(W1 x + b1),  P = sigmoid(w2 . h + b2)
/// with disc_q = 10 sigmoid(raw_disc_q), diff_q = sigmoid(raw_diff_q) and
/// W1, w2 >= 0, so P never decreases when a mastery entry grows.
class NeuralCdmLite final : public DiagnosisModel {
public:
  struct Parameters {
    std::size_t num_concepts = 0;
    std::size_t hidden = 64;
    std::vector<double> w1;       // hidden x num_concepts, row-major
    std::vector<double> b1;       // hidden
    std::vector<double> w2;       // hidden
    double b2 = 0.0;
    std::vector<double> raw_diff; // num_questions x num_concepts
    std::vector<double> raw_disc; // num_questions
  };

  NeuralCdmLite(const ConceptGraph& graph, Parameters params);

  ModelKind kind() const noexcept override { return ModelKind::ncdm; }
  std::size_t num_questions() const noexcept override { return params_.raw_disc.size(); }
  std::size_t ability_dim() const noexcept override { return params_.num_concepts; }
  Ability initial_ability() const override { return Ability(params_.num_concepts, 0.5); }
  void project(std::span<double> theta) const override;

  const Parameters& parameters() const noexcept { return params_; }
  std::span<const ConceptId> concepts_of(QuestionId q) const { return masks_.at(idx(q)); }

  struct Forward {
    std::vector<double> x;
    std::vector<double> h;
    double disc = 0.0;
    double p = 0.0;
  };
  Forward forward(std::span<const double> theta, QuestionId q) const;

private:
  double predict_unchecked(std::span<const double> theta, QuestionId q) const override;
  void gradient_unchecked(std::span<const double> theta, QuestionId q, int answer,
                          std::span<double> out) const override;

  Parameters params_;
  std::vector<std::vector<ConceptId>> masks_;
};

struct PretrainConfig {
  std::size_t epochs = 0;       // 0 selects the per-kind default
  double learning_rate = 0.0;   // 0 selects the per-kind default
  double ability_l2 = 1e-3;
  std::size_t mirt_dim = 3;
  std::size_t ncdm_hidden = 64;
  std::uint64_t seed = 42;

  /// Fills zero fields with the defaults for `kind`.
  PretrainConfig resolved(ModelKind kind) const;
};

struct PretrainResult {
  std::shared_ptr<const DiagnosisModel> model;
  std::vector<double> epoch_loss; // mean BCE per epoch, accumulated during SGD
};

/// Fits question-side parameters by SGD on binary cross-entropy, jointly with
/// one theta per historical examinee. Throws TrainingError on empty input or
/// divergence.
PretrainResult pretrain(ModelKind kind, const ConceptGraph& graph,
                        std::span<const Record> historical, const PretrainConfig& config);

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0) {
    double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(z);
  return e / (1.0 + e);
}

double bce(double p, int answer);

} // namespace detail

} // namespace maat
