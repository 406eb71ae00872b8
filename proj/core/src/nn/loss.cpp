#include "specklenet/nn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace specklenet::nn {

template <typename T>
LossResult<T> cross_entropy_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred, target, "cross_entropy_loss");
  if (pred.rank() != 4 || pred.c() != 2)
    throw ShapeError("cross_entropy_loss: expected (N, 2, H, W), got " + pred.shape_string());
  const double pixels = static_cast<double>(pred.n() * pred.plane());
  const double scale = 1.0 / (2.0 * pixels);
  LossResult<T> out{0.0, Tensor<T>(pred.dims())};
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double raw = pred[i];
    const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
    const double g = target[i];
    // 0·log 0 = 0 for exact binary targets.
    double l = 0.0;
    if (g != 0.0) l -= g * std::log(p);
    if (g != 1.0) l -= (1.0 - g) * std::log(1.0 - p);
    total += l;
    const bool clamped = raw < kProbClamp || raw > 1.0 - kProbClamp;
    out.grad[i] = clamped ? T(0) : static_cast<T>(scale * (-g / p + (1.0 - g) / (1.0 - p)));
  }
  out.loss = total * scale;
  return out;
}

template LossResult<float> cross_entropy_loss(const Tensor<float>&, const Tensor<float>&);
template LossResult<double> cross_entropy_loss(const Tensor<double>&, const Tensor<double>&);

}  // namespace specklenet::nn
