#pragma once

#include "maat/cdm.hpp"
#include "maat/diversity.hpp"
#include "maat/environment.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace maat {

/// Everything a selection strategy may look at for one step.
struct SelectionContext {
  const DiagnosisModel& model;
  std::span<const double> theta;
  const SessionState& session;
  /// Questions the strategy may pick from: a non-empty, ascending subset of
  /// the untested questions.
  std::span<const QuestionId> selectable;
  const CoverageState& coverage;
  std::uint64_t seed = 0;
};

class Strategy {
public:
  virtual ~Strategy() = default;
  virtual std::string_view name() const noexcept = 0;
  virtual bool supports(ModelKind kind) const noexcept = 0;
  virtual QuestionId select(const SelectionContext& ctx) const = 0;
};

/// Two-stage selection: top-k_c questions by expected model change, then the
/// candidate with the largest coverage gain. k_c = 0 means the whole pool.
class MaatStrategy final : public Strategy {
public:
  explicit MaatStrategy(std::size_t k_c = 10) : k_c_(k_c) {}
  std::string_view name() const noexcept override { return "maat"; }
  bool supports(ModelKind) const noexcept override { return true; }
  QuestionId select(const SelectionContext& ctx) const override;
  std::size_t k_c() const noexcept { return k_c_; }

private:
  std::size_t k_c_;
};

class RandomStrategy final : public Strategy {
public:
  std::string_view name() const noexcept override { return "rand"; }
  bool supports(ModelKind) const noexcept override { return true; }
  QuestionId select(const SelectionContext& ctx) const override;
};

class MfiStrategy final : public Strategy {
public:
  std::string_view name() const noexcept override { return "mfi"; }
  bool supports(ModelKind kind) const noexcept override { return kind == ModelKind::irt; }
  QuestionId select(const SelectionContext& ctx) const override;
};

class KliStrategy final : public Strategy {
public:
  explicit KliStrategy(std::size_t points = 64) : points_(points) {}
  std::string_view name() const noexcept override { return "kli"; }
  bool supports(ModelKind kind) const noexcept override { return kind == ModelKind::irt; }
  QuestionId select(const SelectionContext& ctx) const override;

private:
  std::size_t points_;
};

class DOptStrategy final : public Strategy {
public:
  explicit DOptStrategy(double ridge = 1e-6) : ridge_(ridge) {}
  std::string_view name() const noexcept override { return "dopt"; }
  bool supports(ModelKind kind) const noexcept override { return kind == ModelKind::mirt; }
  QuestionId select(const SelectionContext& ctx) const override;

private:
  double ridge_;
};

class MkliStrategy final : public Strategy {
public:
  explicit MkliStrategy(std::size_t points_per_axis = 16, double ridge = 1e-6)
      : points_(points_per_axis), ridge_(ridge) {}
  std::string_view name() const noexcept override { return "mkli"; }
  bool supports(ModelKind kind) const noexcept override { return kind == ModelKind::mirt; }
  QuestionId select(const SelectionContext& ctx) const override;

private:
  std::size_t points_;
  double ridge_;
};

struct StrategyOptions {
  std::size_t k_c = 10;
  std::size_t kli_points = 64;
  std::size_t mkli_points = 16;
  double dopt_ridge = 1e-6;
};

/// Names: maat, rand, mfi, kli, dopt, mkli. Throws ConfigError otherwise.
std::unique_ptr<Strategy> make_strategy(std::string_view name, const StrategyOptions& options = {});

/// Throws CapabilityError naming the pair when `strategy` cannot drive `kind`.
void check_compatible(const Strategy& strategy, ModelKind kind);

// Scoring primitives behind the baselines.

/// Uniform pick from `selectable`, a function of (seed, step) only.
QuestionId rand_select(std::span<const QuestionId> selectable, std::uint64_t seed,
                       std::size_t step);

QuestionId mfi_select(const IrtModel& model, double theta, std::span<const QuestionId> selectable);

/// Integral of KL(P(theta_hat) || P(theta)) over [theta_hat - delta, theta_hat + delta],
/// trapezoid rule with `points` nodes.
double kli_score(const IrtModel& model, double theta_hat, QuestionId q, double delta,
                 std::size_t points);
/// delta_t = 3 / sqrt(t) with t the number of answered questions; MFI when t = 0.
QuestionId kli_select(const IrtModel& model, double theta_hat, std::size_t answered,
                      std::span<const QuestionId> selectable, std::size_t points = 64);

/// det(F_T + F_q), F_T the summed information of `administered` plus ridge * I.
double dopt_score(const MirtModel& model, std::span<const double> theta,
                  std::span<const QuestionId> administered, QuestionId q, double ridge = 1e-6);
QuestionId dopt_select(const MirtModel& model, std::span<const double> theta,
                       std::span<const QuestionId> administered,
                       std::span<const QuestionId> selectable, double ridge = 1e-6);

/// KL integrated over the L-infinity ball of radius delta around theta_hat,
/// tensor-product trapezoid with `points` nodes per axis. Needs dim <= 3.
double mkli_score(const MirtModel& model, std::span<const double> theta_hat, QuestionId q,
                  double delta, std::size_t points);
/// Falls back to D-optimality before the first answer.
QuestionId mkli_select(const MirtModel& model, std::span<const double> theta_hat,
                       std::span<const QuestionId> administered,
                       std::span<const QuestionId> selectable, std::size_t points = 16,
                       double ridge = 1e-6);

/// Bernoulli KL divergence KL(p || q).
double bernoulli_kl(double p, double q);

/// Deterministic 64-bit mix of two values (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;

} // namespace maat
