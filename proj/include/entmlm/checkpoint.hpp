#pragma once

#include <filesystem>
#include <optional>

#include "entmlm/model.hpp"

namespace entmlm {

/// Binary checkpoint layout:
///   8 bytes   magic "ENTMLMCK"
///   u32       format version (1)
///   u64       manifest length in bytes
///   manifest  JSON: {"config": {...}, "num_classes": C,
///                    "tensors": [{"name", "shape", "dtype": "f64", "offset"}, ...]}
///   payload   raw little-endian doubles; offsets are relative to the payload start
/// All integers are little-endian. Written through a temp file and rename.
void save_checkpoint(const Model& model, const std::filesystem::path& path);

/// Rebuilds the model from the stored config. When `expected` is given the
/// stored config must match it. Every tensor's shape is checked against the
/// config; any mismatch throws ConfigError.
Model load_checkpoint(const std::filesystem::path& path,
                      const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace entmlm
