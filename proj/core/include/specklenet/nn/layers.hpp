#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "specklenet/nn/tensor.hpp"

// Hand-written forward/backward kernels. All functions are stateless: the
// caller keeps whatever the backward pass needs. Instantiated for float
// (training) and double (gradient checks).
namespace specklenet::nn {

template <typename T>
struct ConvGrads {
  Tensor<T> dx, dw, db;
};

/// Cross-correlation. x (N, Ci, H, W), w (Co, Ci, K, K), b (Co).
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                         std::size_t stride = 1, std::size_t pad = 1);
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                             std::size_t stride = 1, std::size_t pad = 1);

template <typename T>
struct BatchNormParams {
  Tensor<T> gamma, beta, running_mean, running_var;
  T momentum = T(0.1);
  T epsilon = T(1e-5);
};

template <typename T>
struct BatchNormCache {
  Tensor<T> xhat;
  std::vector<T> inv_std;
};

template <typename T>
struct BatchNormGrads {
  Tensor<T> dx, dgamma, dbeta;
};

/// Training mode: normalizes with batch statistics and updates the running
/// estimates (unbiased variance). Requires batch >= 2.
template <typename T>
Tensor<T> batchnorm_forward_train(const Tensor<T>& x, BatchNormParams<T>& p, BatchNormCache<T>* cache);
/// Inference mode: running statistics, no state change.
template <typename T>
Tensor<T> batchnorm_forward_infer(const Tensor<T>& x, const BatchNormParams<T>& p);
template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& dy, const BatchNormCache<T>& cache,
                                     const Tensor<T>& gamma);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);
/// Gradient mask taken from the forward input.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy);

/// 2×2 max pooling, stride 2. `argmax` receives the flat input index of each
/// output's maximum (first one on ties).
template <typename T>
Tensor<T> maxpool2x2_forward(const Tensor<T>& x, std::vector<std::size_t>* argmax);
template <typename T>
Tensor<T> maxpool2x2_backward(const Tensor<T>& dy, const std::vector<std::size_t>& argmax,
                              const std::vector<std::size_t>& x_dims);

template <typename T>
Tensor<T> upsample2x_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& dy);

/// Softmax over the channel axis.
template <typename T>
Tensor<T> softmax_channels_forward(const Tensor<T>& x);
/// Takes the forward output y.
template <typename T>
Tensor<T> softmax_channels_backward(const Tensor<T>& y, const Tensor<T>& dy);

template <typename T>
Tensor<T> concat_channels_forward(const std::vector<const Tensor<T>*>& parts);
template <typename T>
std::vector<Tensor<T>> concat_channels_backward(const Tensor<T>& dy,
                                                const std::vector<std::size_t>& channels);

/// He-normal initialization for a conv weight (fan-in = Ci·K·K), zero bias.
template <typename T>
void he_normal_init(Tensor<T>& w, Tensor<T>& b, std::uint64_t seed);

}  // namespace specklenet::nn
