#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dgp/config.hpp"
#include "dgp/dataset.hpp"
#include "dgp/model.hpp"
#include "dgp/training.hpp"

namespace dgp {

inline constexpr int kCheckpointVersion = 1;

/// Everything besides the parameters needed to resume or reuse a model.
struct CheckpointMeta {
  ExperimentConfig config;
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;
  std::optional<ColumnStats> x_stats;
  std::optional<ColumnStats> y_stats;
  TrainingState state;
};

struct Checkpoint {
  DeepGP model;
  CheckpointMeta meta;
};

/// Layout: the line "DGPCKPT <version>", the line "<n>" giving the byte length
/// of a JSON header (config echo, schema, counters and stream positions),
/// the header itself, then named tensor blocks (u32 name length, name, u32
/// rank, u64 dims, little-endian f64 data) holding parameters, optimiser
/// moments, statistics and floating-point state. Written atomically.
void save_checkpoint(const std::filesystem::path& path, const DeepGP& model,
                     const CheckpointMeta& meta);

/// Reads a checkpoint in full before building anything; a malformed or
/// truncated file raises CheckpointError naming the first bad field.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dgp
