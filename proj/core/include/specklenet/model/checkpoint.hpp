#pragma once

#include <filesystem>
#include <optional>

#include "specklenet/model/trainer.hpp"

namespace specklenet::model {

/// Directory with manifest.json and one SPKT file per parameter and
/// batch-norm buffer. Adam moments, when present, go under optimizer/.
void save_checkpoint(const NetworkState& state, const TrainConfig& cfg, const std::filesystem::path& dir,
                     bool with_optimizer = true);

struct LoadedCheckpoint {
  NetworkState state;
  TrainConfig config;
};

/// Throws CheckpointIncompatibleError on format, version or shape mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// Most advanced checkpoint (by completed epochs) directly under `root`.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& root);

}  // namespace specklenet::model
