#include "maat/strategy.hpp"

#include "maat/errors.hpp"
#include "maat/quality.hpp"

#include <string>

namespace maat {

namespace {

template <class Model>
const Model& require_model(const Strategy& strategy, const DiagnosisModel& model) {
  if (auto* m = dynamic_cast<const Model*>(&model)) return *m;
  throw CapabilityError(std::string(strategy.name()) + " cannot drive a " +
                        std::string(to_string(model.kind())) + " model");
}

} // namespace

QuestionId MaatStrategy::select(const SelectionContext& ctx) const {
  const std::size_t k = k_c_ == 0 ? ctx.selectable.size() : k_c_;
  const auto candidates = select_candidates(ctx.model, ctx.theta, ctx.selectable, k);
  return select_diverse(ctx.coverage, candidates);
}

QuestionId RandomStrategy::select(const SelectionContext& ctx) const {
  return rand_select(ctx.selectable, ctx.seed, ctx.session.step());
}

QuestionId MfiStrategy::select(const SelectionContext& ctx) const {
  const auto& irt = require_model<IrtModel>(*this, ctx.model);
  return mfi_select(irt, ctx.theta[0], ctx.selectable);
}

QuestionId KliStrategy::select(const SelectionContext& ctx) const {
  const auto& irt = require_model<IrtModel>(*this, ctx.model);
  return kli_select(irt, ctx.theta[0], ctx.session.step(), ctx.selectable, points_);
}

QuestionId DOptStrategy::select(const SelectionContext& ctx) const {
  const auto& mirt = require_model<MirtModel>(*this, ctx.model);
  return dopt_select(mirt, ctx.theta, ctx.session.tested(), ctx.selectable, ridge_);
}

QuestionId MkliStrategy::select(const SelectionContext& ctx) const {
  const auto& mirt = require_model<MirtModel>(*this, ctx.model);
  return mkli_select(mirt, ctx.theta, ctx.session.tested(), ctx.selectable, points_, ridge_);
}

std::unique_ptr<Strategy> make_strategy(std::string_view name, const StrategyOptions& options) {
  if (name == "maat") return std::make_unique<MaatStrategy>(options.k_c);
  if (name == "rand") return std::make_unique<RandomStrategy>();
  if (name == "mfi") return std::make_unique<MfiStrategy>();
  if (name == "kli") return std::make_unique<KliStrategy>(options.kli_points);
  if (name == "dopt") return std::make_unique<DOptStrategy>(options.dopt_ridge);
  if (name == "mkli") return std::make_unique<MkliStrategy>(options.mkli_points, options.dopt_ridge);
  throw ConfigError("unknown strategy '" + std::string(name) +
                    "' (expected maat, rand, mfi, kli, dopt or mkli)");
}

void check_compatible(const Strategy& strategy, ModelKind kind) {
  if (!strategy.supports(kind)) {
    throw CapabilityError("strategy " + std::string(strategy.name()) + " is not compatible with model " +
                          std::string(to_string(kind)));
  }
}

} // namespace maat
