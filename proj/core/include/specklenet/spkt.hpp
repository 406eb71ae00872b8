#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace specklenet::spkt {

/// Dense float32 tensor as stored on disk: "SPKT", version 0x01, dtype 0x01
/// (float32 LE), rank byte, rank × u32 LE dims, row-major LE payload.
struct Array {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  friend bool operator==(const Array&, const Array&) = default;
};

inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::uint8_t kDtypeFloat32 = 0x01;

std::vector<std::uint8_t> encode(std::span<const std::uint32_t> dims, std::span<const float> data);
/// Throws FormatError (naming `source`) on bad magic, version, dtype or size.
Array decode(std::span<const std::uint8_t> bytes, std::string_view source = "<memory>");

void write(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
           std::span<const float> data);
Array read(const std::filesystem::path& path);

}  // namespace specklenet::spkt
