#include "specklenet/nn/adam.hpp"

#include <cmath>

namespace specklenet::nn {

template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& s, double lr) {
  require_same_shape(param, grad, "adam_step");
  if (s.m.dims() != param.dims()) s = {Tensor<T>(param.dims()), Tensor<T>(param.dims()), 0, s.beta1, s.beta2, s.epsilon};
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    const double v = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    s.m[i] = static_cast<T>(m);
    s.v[i] = static_cast<T>(v);
    param[i] = static_cast<T>(param[i] - lr * (m / c1) / (std::sqrt(v / c2) + s.epsilon));
  }
}

template void adam_step(Tensor<float>&, const Tensor<float>&, AdamState<float>&, double);
template void adam_step(Tensor<double>&, const Tensor<double>&, AdamState<double>&, double);

}  // namespace specklenet::nn
