#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "specklenet/error.hpp"

namespace specklenet::nn {

/// Row-major N-d array. 4-D tensors are (batch, channel, height, width).
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, T fill = T{}) : dims_(std::move(dims)) {
    for (auto d : dims_)
      if (d == 0) throw ShapeError("tensor extents must be >= 1, got " + shape_string());
    data_.assign(count(dims_), fill);
  }
  Tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T{})
      : Tensor(std::vector<std::size_t>{n, c, h, w}, fill) {}

  static std::size_t count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

  [[nodiscard]] const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  [[nodiscard]] std::size_t rank() const noexcept { return dims_.size(); }
  [[nodiscard]] std::size_t dim(std::size_t i) const { return dims_.at(i); }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  // 4-D accessors.
  [[nodiscard]] std::size_t n() const { return dims_.at(0); }
  [[nodiscard]] std::size_t c() const { return dims_.at(1); }
  [[nodiscard]] std::size_t h() const { return dims_.at(2); }
  [[nodiscard]] std::size_t w() const { return dims_.at(3); }
  [[nodiscard]] std::size_t plane() const { return dims_.at(2) * dims_.at(3); }

  T& operator()(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) noexcept {
    assert(rank() == 4);
    return data_[((b * dims_[1] + ch) * dims_[2] + y) * dims_[3] + x];
  }
  const T& operator()(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const noexcept {
    assert(rank() == 4);
    return data_[((b * dims_[1] + ch) * dims_[2] + y) * dims_[3] + x];
  }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  [[nodiscard]] T* data() noexcept { return data_.data(); }
  [[nodiscard]] const T* data() const noexcept { return data_.data(); }
  [[nodiscard]] std::span<T> values() noexcept { return data_; }
  [[nodiscard]] std::span<const T> values() const noexcept { return data_; }
  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  [[nodiscard]] std::string shape_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < dims_.size(); ++i) s += (i ? ", " : "") + std::to_string(dims_[i]);
    return s + ")";
  }

  void reshape(std::vector<std::size_t> dims) {
    if (count(dims) != data_.size()) throw ShapeError("cannot reshape " + shape_string());
    dims_ = std::move(dims);
  }

  template <typename U>
  [[nodiscard]] Tensor<U> cast() const {
    Tensor<U> out(dims_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<T> data_;
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.dims() != b.dims())
    throw ShapeError(std::string(what) + ": shape " + a.shape_string() + " vs " + b.shape_string());
}

}  // namespace specklenet::nn
