#pragma once

#include <cstdint>

#include "specklenet/nn/tensor.hpp"

namespace specklenet::nn {

template <typename T>
struct AdamState {
  Tensor<T> m, v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Zero moments shaped like `param`.
  static AdamState like(const Tensor<T>& param) { return {Tensor<T>(param.dims()), Tensor<T>(param.dims())}; }
};

/// One bias-corrected Adam update of `param` in place.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state, double lr);

}  // namespace specklenet::nn
