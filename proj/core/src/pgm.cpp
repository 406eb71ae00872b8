#include "specklenet/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "specklenet/error.hpp"

namespace specklenet::pgm {

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string token(std::istream& in, const std::string& name) {
  std::string t;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!t.empty()) return t;
      continue;
    }
    t.push_back(static_cast<char>(ch));
  }
  if (t.empty()) throw FormatError(name + ": truncated PGM header");
  return t;
}

std::size_t number(std::istream& in, const std::string& name) {
  const std::string t = token(in, name);
  if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    throw FormatError(name + ": malformed PGM header field '" + t + "'");
  return std::stoul(t);
}

}  // namespace

void write(const std::filesystem::path& path, const Grid2D<std::uint8_t>& image) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  f.write(reinterpret_cast<const char*>(image.data()), static_cast<std::streamsize>(image.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

Grid2D<std::uint8_t> read(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(name + ": cannot open");
  if (token(f, name) != "P5") throw FormatError(name + ": not a binary PGM (P5)");
  const std::size_t w = number(f, name);
  const std::size_t h = number(f, name);
  const std::size_t maxval = number(f, name);
  if (w == 0 || h == 0) throw FormatError(name + ": zero image extent");
  if (maxval == 0 || maxval > 255) throw FormatError(name + ": only 8-bit PGM is supported");
  Grid2D<std::uint8_t> g(h, w);
  f.read(reinterpret_cast<char*>(g.data()), static_cast<std::streamsize>(g.size()));
  if (f.gcount() != static_cast<std::streamsize>(g.size())) throw FormatError(name + ": truncated pixel data");
  if (maxval != 255)
    for (auto& v : g.values())
      v = static_cast<std::uint8_t>(std::lround(255.0 * std::min<std::size_t>(v, maxval) / static_cast<double>(maxval)));
  return g;
}

Grid2D<std::uint8_t> quantize(const Grid2D<double>& unit) {
  Grid2D<std::uint8_t> out(unit.rows(), unit.cols());
  for (std::size_t i = 0; i < unit.size(); ++i)
    out.data()[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(unit.data()[i], 0.0, 1.0)));
  return out;
}

Grid2D<std::uint8_t> stretch(const Grid2D<double>& values) {
  Grid2D<std::uint8_t> out(values.rows(), values.cols());
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.values().begin(), values.values().end());
  const double span = *hi - *lo;
  if (span <= 0.0) return out;
  for (std::size_t i = 0; i < values.size(); ++i)
    out.data()[i] = static_cast<std::uint8_t>(std::lround(255.0 * (values.data()[i] - *lo) / span));
  return out;
}

}  // namespace specklenet::pgm
