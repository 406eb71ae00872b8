#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specklenet/datagen.hpp"
#include "specklenet/model/arch.hpp"
#include "specklenet/nn/layers.hpp"
#include "specklenet/nn/tensor.hpp"

namespace specklenet::model {

using datagen::Task;

template <typename T>
struct ParamRef {
  std::string name;
  nn::Tensor<T>* value;
  nn::Tensor<T>* grad;
};

/// Named tensor that is part of the model state but not trained by gradient
/// descent (batch-norm running statistics).
template <typename T>
struct BufferRef {
  std::string name;
  nn::Tensor<T>* value;
};

/// Encoder: stem conv, then per block a dense block followed by 2×2 max
/// pooling. Decoder: per block BN→ReLU→2× nearest upsample→conv (growth
/// maps), concatenation with the matching encoder output, and a dense block
/// that emits only its new maps. Head: BN→ReLU→conv to 2 maps→softmax.
template <typename T>
class DenseUNet {
 public:
  DenseUNet(const ArchSpec& arch, Task task, std::uint64_t seed);

  [[nodiscard]] const ArchSpec& arch() const noexcept { return arch_; }
  [[nodiscard]] Task task() const noexcept { return task_; }

  /// Training-mode forward: batch statistics, running-stat update, caches
  /// kept for backward. Input (N, 1, S, S); returns softmax maps (N, 2, S, S).
  nn::Tensor<T> forward_train(const nn::Tensor<T>& x);
  /// Accumulates parameter gradients from dL/d(softmax output). Must follow
  /// forward_train.
  void backward(const nn::Tensor<T>& dprob);
  /// Inference-mode forward; does not touch any state.
  [[nodiscard]] nn::Tensor<T> infer(const nn::Tensor<T>& x) const;
  /// ReLU'd dense-block outputs at encoder taps 0..E-1 and decoder taps
  /// E..E+D-1; tap E+D is the softmax output. Inference mode.
  [[nodiscard]] std::vector<nn::Tensor<T>> activations(const nn::Tensor<T>& x,
                                                       const std::vector<std::size_t>& taps) const;

  std::vector<ParamRef<T>> parameters();
  std::vector<BufferRef<T>> buffers();
  void zero_grad();
  [[nodiscard]] std::size_t parameter_count() const;

  /// Same topology and values in another precision.
  template <typename U>
  [[nodiscard]] DenseUNet<U> converted() const;

  struct Conv {
    nn::Tensor<T> w, b, dw, db;
  };
  struct BN {
    nn::BatchNormParams<T> p;
    nn::Tensor<T> dgamma, dbeta;
  };
  /// BN → ReLU → conv, optionally with a 2× upsample before the conv.
  struct Unit {
    BN bn;
    Conv conv;
    bool upsample = false;
  };
  struct Block {
    std::vector<Unit> units;
    bool keep_input = true;
  };

 private:
  template <typename U>
  friend class DenseUNet;

  struct UnitCache {
    nn::Tensor<T> bn_out, conv_in;
    nn::BatchNormCache<T> bn;
  };
  struct BlockCache {
    std::vector<UnitCache> units;
    std::vector<std::size_t> channels;  // channel count of each feature in the block
  };
  struct Cache {
    nn::Tensor<T> input;
    std::vector<BlockCache> enc, dec;
    std::vector<UnitCache> up;
    UnitCache head;
    std::vector<std::vector<std::size_t>> pool_argmax;
    std::vector<std::vector<std::size_t>> pool_dims;
    std::vector<std::size_t> skip_channels;
    nn::Tensor<T> prob;
    bool valid = false;
  };

  // Self/U/B are const for inference and non-const for training.
  template <typename Self>
  static nn::Tensor<T> run(Self& self, const nn::Tensor<T>& x, Cache* cache, std::vector<nn::Tensor<T>>* taps);
  template <typename U>
  static nn::Tensor<T> run_unit(U& u, const nn::Tensor<T>& x, UnitCache* cache);
  template <typename B>
  static nn::Tensor<T> run_block(B& b, const nn::Tensor<T>& x, BlockCache* cache);
  static nn::Tensor<T> unit_backward(Unit& u, const UnitCache& c, const nn::Tensor<T>& dy);
  static nn::Tensor<T> block_backward(Block& b, const BlockCache& c, const nn::Tensor<T>& dy);

  DenseUNet() = default;
  void check_input(const nn::Tensor<T>& x) const;

  ArchSpec arch_;
  Task task_ = Task::binary;
  Conv stem_;
  std::vector<Block> enc_, dec_;
  std::vector<Unit> up_;
  Unit head_;
  Cache cache_;
};

extern template class DenseUNet<float>;
extern template class DenseUNet<double>;

struct Prediction {
  nn::Tensor<float> object;      // (N, 1, S, S)
  nn::Tensor<float> background;  // 1 − object
};

/// Binary task: argmax over the two channels, ties go to background.
/// Grayscale: object channel quantized to k/255.
Prediction predict(const DenseUNet<float>& net, const nn::Tensor<float>& input);

}  // namespace specklenet::model
