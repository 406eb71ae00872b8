#include "specklenet/spkt.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>
#include <string>

#include "specklenet/error.hpp"

namespace specklenet::spkt {

namespace {

constexpr std::uint8_t kMagic[4] = {'S', 'P', 'K', 'T'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::size_t element_count(std::span<const std::uint32_t> dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

std::vector<std::uint8_t> encode(std::span<const std::uint32_t> dims, std::span<const float> data) {
  if (dims.empty() || dims.size() > 255) throw InvalidInputError("spkt: rank must be in [1, 255]");
  for (auto d : dims)
    if (d == 0) throw InvalidInputError("spkt: zero extent");
  if (element_count(dims) != data.size())
    throw ShapeError("spkt: dims describe " + std::to_string(element_count(dims)) +
                     " elements but payload has " + std::to_string(data.size()));
  std::vector<std::uint8_t> out;
  out.reserve(7 + 4 * dims.size() + 4 * data.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  out.push_back(kDtypeFloat32);
  out.push_back(static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) put_u32(out, d);
  for (float f : data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

Array decode(std::span<const std::uint8_t> bytes, std::string_view source) {
  const std::string where(source);
  if (bytes.size() < 7 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    throw FormatError(where + ": not an SPKT file (bad magic)");
  if (bytes[4] != kVersion)
    throw FormatError(where + ": unsupported SPKT version " + std::to_string(bytes[4]));
  if (bytes[5] != kDtypeFloat32)
    throw FormatError(where + ": unsupported SPKT dtype " + std::to_string(bytes[5]));
  const std::size_t rank = bytes[6];
  if (rank == 0) throw FormatError(where + ": rank 0");
  if (bytes.size() < 7 + 4 * rank) throw FormatError(where + ": truncated header");
  Array a;
  a.dims.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    a.dims[i] = get_u32(bytes.data() + 7 + 4 * i);
    if (a.dims[i] == 0) throw FormatError(where + ": zero extent");
  }
  const std::size_t n = element_count(a.dims);
  const std::size_t offset = 7 + 4 * rank;
  if (bytes.size() != offset + 4 * n)
    throw FormatError(where + ": payload size " + std::to_string(bytes.size() - offset) +
                      " bytes, expected " + std::to_string(4 * n));
  a.data.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    a.data[i] = std::bit_cast<float>(get_u32(bytes.data() + offset + 4 * i));
  return a;
}

void write(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
           std::span<const float> data) {
  const auto bytes = encode(dims, data);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

Array read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode(bytes, path.string());
}

}  // namespace specklenet::spkt
