#pragma once

// Key-value configuration text: one `key = value` per line, `#` starts a
// comment, blank lines are ignored. Keys are documented in README.md.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "qbv/dsp.hpp"
#include "qbv/training.hpp"

namespace qbv {

using ConfigMap = std::map<std::string, std::string>;

/// Everything the CLI needs to build features, models and the baseline.
struct Settings {
  TrainingSetup training;
  BaselineConfig baseline;

  /// Keeps the CQT sample rate in sync with the feature sample rate.
  void sync();
};

ConfigMap parse_config_text(std::string_view text);
ConfigMap load_config_file(const std::filesystem::path& path);
std::string format_config_text(const ConfigMap& map);

/// Applies known keys; throws std::invalid_argument naming any unknown key or
/// malformed value.
void apply_config(const ConfigMap& map, Settings& settings);
ConfigMap to_config_map(const Settings& settings);

Settings load_settings(const std::filesystem::path& path);

std::string to_string(DiagonalMode mode);
std::string to_string(LossKind kind);
std::string to_string(SimilarityHead head);

}  // namespace qbv
