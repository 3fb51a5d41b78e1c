#pragma once

#include "maat/cdm.hpp"

#include <span>
#include <unordered_map>

namespace maat::detail {

// Dense slot per historical examinee, in order of first appearance.
struct ExamineeSlots {
  explicit ExamineeSlots(std::span<const Record> records);
  std::size_t operator()(ExamineeId e) const;
  std::size_t size() const noexcept { return slot_of.size(); }

  std::unordered_map<std::size_t, std::size_t> slot_of;
};

void check_epoch_loss(double loss, const PretrainConfig& cfg, std::size_t epoch);

PretrainResult fit_irt(const ConceptGraph& graph, std::span<const Record> records,
                       const PretrainConfig& cfg);
PretrainResult fit_mirt(const ConceptGraph& graph, std::span<const Record> records,
                        const PretrainConfig& cfg);
PretrainResult fit_ncdm(const ConceptGraph& graph, std::span<const Record> records,
                        const PretrainConfig& cfg);

} // namespace maat::detail
