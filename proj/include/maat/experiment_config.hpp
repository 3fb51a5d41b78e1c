#pragma once

#include "maat/harness.hpp"
#include "maat/synthetic.hpp"

#include <filesystem>
#include <optional>
#include <string_view>

namespace maat {

struct ExperimentFile {
  ExperimentConfig config;
  std::optional<std::filesystem::path> output_dir;
};

/// Parses an experiment TOML document. Relative paths are resolved against
/// `base_dir`. Unknown sections or keys are rejected with ConfigError.
ExperimentFile parse_experiment_toml(std::string_view text,
                                     const std::filesystem::path& base_dir = {});
ExperimentFile load_experiment_config(const std::filesystem::path& path);

/// Parses a synthetic spec: either a bare table of spec keys or one under
/// [synthetic].
SyntheticSpec parse_synthetic_toml(std::string_view text);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

} // namespace maat
