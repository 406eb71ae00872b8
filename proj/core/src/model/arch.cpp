#include "specklenet/model/arch.hpp"

#include "json.hpp"
#include "specklenet/error.hpp"

namespace specklenet::model {

using json = nlohmann::json;

void ArchSpec::validate() const {
  if (encoder_blocks < 1) throw ConfigError("arch: encoder_blocks must be >= 1");
  if (encoder_blocks != decoder_blocks)
    throw ConfigError("arch: encoder_blocks (" + std::to_string(encoder_blocks) + ") must equal decoder_blocks (" +
                      std::to_string(decoder_blocks) + ")");
  if (layers_per_block < 1 || growth < 1 || stem_channels < 1)
    throw ConfigError("arch: layers_per_block, growth and stem_channels must be >= 1");
  if (encoder_blocks >= 31 || input_size == 0 || input_size % (std::size_t{1} << encoder_blocks) != 0)
    throw ConfigError("arch: input_size " + std::to_string(input_size) + " is not divisible by 2^" +
                      std::to_string(encoder_blocks));
}

std::size_t ArchSpec::encoder_channels(std::size_t b) const {
  return stem_channels + (b + 1) * layers_per_block * growth;
}

std::size_t ArchSpec::activation_size(std::size_t index) const {
  if (index < encoder_blocks) return input_size >> index;
  if (index < encoder_blocks + decoder_blocks) return input_size >> (decoder_blocks - 1 - (index - encoder_blocks));
  return input_size;
}

std::string to_json_string(const ArchSpec& a) {
  return json{{"input_size", a.input_size},
              {"encoder_blocks", a.encoder_blocks},
              {"decoder_blocks", a.decoder_blocks},
              {"layers_per_block", a.layers_per_block},
              {"growth", a.growth},
              {"stem_channels", a.stem_channels},
              {"skip_connections", a.skip_connections}}
      .dump();
}

ArchSpec arch_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("arch: ") + e.what());
  }
  ArchSpec a;
  a.input_size = j.value("input_size", a.input_size);
  a.encoder_blocks = j.value("encoder_blocks", a.encoder_blocks);
  a.decoder_blocks = j.value("decoder_blocks", a.decoder_blocks);
  a.layers_per_block = j.value("layers_per_block", a.layers_per_block);
  a.growth = j.value("growth", a.growth);
  a.stem_channels = j.value("stem_channels", a.stem_channels);
  a.skip_connections = j.value("skip_connections", a.skip_connections);
  return a;
}

}  // namespace specklenet::model
