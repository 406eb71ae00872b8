#pragma once

#include <cstdint>
#include <filesystem>

#include "specklenet/grid.hpp"

namespace specklenet::pgm {

/// Binary (P5) 8-bit PGM.
void write(const std::filesystem::path& path, const Grid2D<std::uint8_t>& image);
/// Reads P5 with maxval <= 255; comments allowed. Throws FormatError naming
/// the file on anything else.
Grid2D<std::uint8_t> read(const std::filesystem::path& path);

/// Maps [0, 1] to 0..255 with rounding; values outside are clamped.
Grid2D<std::uint8_t> quantize(const Grid2D<double>& unit);
/// Linear min-max stretch to 0..255 (constant images map to 0).
Grid2D<std::uint8_t> stretch(const Grid2D<double>& values);

}  // namespace specklenet::pgm
