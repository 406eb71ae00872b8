#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace specklenet {

/// Dense row-major 2D array. Used for images, phase screens and complex fields.
template <typename T>
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }
  [[nodiscard]] bool is_square() const noexcept { return rows_ == cols_; }

  T& operator()(std::size_t r, std::size_t c) noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  [[nodiscard]] std::span<T> values() noexcept { return data_; }
  [[nodiscard]] std::span<const T> values() const noexcept { return data_; }
  [[nodiscard]] T* data() noexcept { return data_.data(); }
  [[nodiscard]] const T* data() const noexcept { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Grid2D&, const Grid2D&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Copies the centered `size`×`size` window of a square grid.
template <typename T>
Grid2D<T> center_crop(const Grid2D<T>& g, std::size_t size) {
  assert(size <= g.rows() && size <= g.cols());
  const std::size_t r0 = (g.rows() - size) / 2;
  const std::size_t c0 = (g.cols() - size) / 2;
  Grid2D<T> out(size, size);
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) out(r, c) = g(r0 + r, c0 + c);
  return out;
}

/// Places `src` at the center of a zero grid of side `size`.
template <typename T>
Grid2D<T> center_embed(const Grid2D<T>& src, std::size_t size) {
  assert(src.rows() <= size && src.cols() <= size);
  Grid2D<T> out(size, size);
  const std::size_t r0 = (size - src.rows()) / 2;
  const std::size_t c0 = (size - src.cols()) / 2;
  for (std::size_t r = 0; r < src.rows(); ++r)
    for (std::size_t c = 0; c < src.cols(); ++c) out(r0 + r, c0 + c) = src(r, c);
  return out;
}

}  // namespace specklenet
