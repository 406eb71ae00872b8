#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "specklenet/datagen.hpp"
#include "specklenet/model/network.hpp"
#include "specklenet/nn/adam.hpp"

namespace specklenet::model {

struct TrainConfig {
  std::size_t epochs = 50;
  /// (first epoch, learning rate); starts at 0, strictly increasing.
  std::vector<std::pair<std::size_t, double>> lr_schedule{{0, 1e-4}, {30, 1e-5}, {40, 1e-6}};
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] double lr_at(std::size_t epoch) const;
  /// Index of the schedule phase containing `epoch`.
  [[nodiscard]] std::size_t phase_at(std::size_t epoch) const;
};

std::string to_json_string(const TrainConfig& c);
TrainConfig train_config_from_json(std::string_view json);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
};

/// Network plus optimizer state and training progress.
struct NetworkState {
  explicit NetworkState(DenseUNet<float> n) : net(std::move(n)) {}

  DenseUNet<float> net;
  std::vector<nn::AdamState<float>> adam;  // parallel to net.parameters()
  std::size_t epoch = 0;                   // epochs completed
  std::vector<EpochLog> log;
};

struct TrainOptions {
  /// Phase checkpoints ("epoch-NNNN" at schedule boundaries) and "final".
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const EpochLog&)> on_epoch;
  /// Stops after this many completed epochs (simulates an interruption).
  std::optional<std::size_t> stop_after;
};

/// Stacks samples into a batch: inputs (N, 1, S, S), targets (N, 2, S, S).
std::pair<nn::Tensor<float>, nn::Tensor<float>> make_batch(const std::vector<datagen::Sample>& samples,
                                                           const std::vector<std::size_t>& indices);

/// Epoch batches after a seed-derived shuffle. A trailing batch of one is
/// merged into the previous batch (batch-norm needs two samples).
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch);

/// Continues training from state.epoch up to cfg.epochs.
void train(NetworkState& state, const std::vector<datagen::Sample>& samples, const TrainConfig& cfg,
           const TrainOptions& options = {});

}  // namespace specklenet::model
