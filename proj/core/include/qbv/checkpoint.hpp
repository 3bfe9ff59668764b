#pragma once

// Model checkpoints in the QBVE container. The header block (dim 0) carries
// "kind=params" followed by "config:key=value" entries; each parameter array
// follows as a single-entry block whose id is the array name, e.g.
// "reference.conv1.weight", "shared.proj.bias" or "head.fnn".
// Parameters are stored as f32, so a reload rounds doubles to float.

#include <filesystem>
#include <iosfwd>

#include "qbv/config.hpp"
#include "qbv/training.hpp"

namespace qbv {

inline constexpr const char* kParamsKindTag = "kind=params";

void write_checkpoint(std::ostream& out, const QbvModel& model);
QbvModel read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const QbvModel& model);
/// Throws FormatError on a malformed or non-parameter file.
QbvModel load_checkpoint(const std::filesystem::path& path);

/// Settings equivalent to the model's feature, encoder and loss configuration.
Settings model_settings(const QbvModel& model);

}  // namespace qbv
