#pragma once

#include "specklenet/nn/tensor.hpp"

namespace specklenet::nn {

inline constexpr double kProbClamp = 1e-7;

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;  // dL/dpred
};

/// Two-channel averaged binary cross-entropy,
///   L = 1/(2N) Σ_c Σ_x −(g log p + (1−g) log(1−p)),
/// N = batch·height·width, p clamped to [1e-7, 1−1e-7]. The gradient is
/// zero where the clamp is active.
template <typename T>
LossResult<T> cross_entropy_loss(const Tensor<T>& pred, const Tensor<T>& target);

}  // namespace specklenet::nn
