#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace specklenet::model {

/// Dense-block encoder-decoder topology.
struct ArchSpec {
  std::size_t input_size = 64;
  std::size_t encoder_blocks = 4;
  std::size_t decoder_blocks = 4;
  std::size_t layers_per_block = 3;
  std::size_t growth = 16;
  std::size_t stem_channels = 16;
  bool skip_connections = true;

  /// Throws ConfigError when the topology is inconsistent.
  void validate() const;

  /// Channels leaving encoder block b (before pooling).
  [[nodiscard]] std::size_t encoder_channels(std::size_t b) const;
  /// Channels leaving decoder block b.
  [[nodiscard]] std::size_t decoder_channels() const { return layers_per_block * growth; }
  [[nodiscard]] std::size_t bottleneck_size() const { return input_size >> encoder_blocks; }
  /// Activation taps: one per encoder block, one per decoder block, plus the head.
  [[nodiscard]] std::size_t activation_layers() const { return encoder_blocks + decoder_blocks + 1; }
  /// Spatial side of activation tap `index`.
  [[nodiscard]] std::size_t activation_size(std::size_t index) const;

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

std::string to_json_string(const ArchSpec& a);
ArchSpec arch_from_json(std::string_view json);

}  // namespace specklenet::model
