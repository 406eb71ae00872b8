#include "specklenet/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "specklenet/nn/gemm.hpp"
#include "specklenet/parallel.hpp"
#include "specklenet/rng.hpp"

namespace specklenet::nn {

namespace {

template <typename T>
void require_rank4(const Tensor<T>& t, const char* what) {
  if (t.rank() != 4) throw ShapeError(std::string(what) + ": expected a 4-D tensor, got " + t.shape_string());
}

struct ConvGeometry {
  std::size_t ci, h, w, k, stride, pad, ho, wo;
  [[nodiscard]] std::size_t rows() const { return ci * k * k; }
  [[nodiscard]] std::size_t cols() const { return ho * wo; }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t pad) {
  require_rank4(x, "conv2d");
  require_rank4(w, "conv2d weight");
  if (w.c() != x.c() || w.h() != w.w())
    throw ShapeError("conv2d: input " + x.shape_string() + " incompatible with weight " + w.shape_string());
  if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  const std::size_t k = w.h();
  if (x.h() + 2 * pad < k || x.w() + 2 * pad < k)
    throw ShapeError("conv2d: kernel " + w.shape_string() + " larger than padded input " + x.shape_string());
  return {x.c(), x.h(), x.w(), k, stride, pad, (x.h() + 2 * pad - k) / stride + 1,
          (x.w() + 2 * pad - k) / stride + 1};
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  for (std::size_t c = 0; c < g.ci; ++c)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((c * g.k + ky) * g.k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.h) && ix < static_cast<long>(g.w);
            row[oy * g.wo + ox] = inside ? x[(c * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] : T(0);
          }
        }
      }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* x) {
  for (std::size_t c = 0; c < g.ci; ++c)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((c * g.k + ky) * g.k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            x[(c * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] += row[oy * g.wo + ox];
          }
        }
      }
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride,
                         std::size_t pad) {
  const ConvGeometry g = conv_geometry(x, w, stride, pad);
  const std::size_t co = w.n();
  if (b.size() != co) throw ShapeError("conv2d: bias " + b.shape_string() + " for " + std::to_string(co) + " filters");
  Tensor<T> y(x.n(), co, g.ho, g.wo);
  const std::size_t in_stride = g.ci * g.h * g.w;
  const std::size_t out_stride = co * g.cols();
  parallel_for(x.n(), [&](std::size_t n) {
    std::vector<T> col(g.rows() * g.cols());
    im2col(x.data() + n * in_stride, g, col.data());
    T* out = y.data() + n * out_stride;
    gemm<T>(false, false, co, g.cols(), g.rows(), T(1), w.data(), g.rows(), col.data(), g.cols(), T(0), out, g.cols());
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t i = 0; i < g.cols(); ++i) out[o * g.cols() + i] += b[o];
  });
  return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, std::size_t stride,
                             std::size_t pad) {
  const ConvGeometry g = conv_geometry(x, w, stride, pad);
  const std::size_t co = w.n();
  require_rank4(dy, "conv2d backward");
  if (dy.n() != x.n() || dy.c() != co || dy.h() != g.ho || dy.w() != g.wo)
    throw ShapeError("conv2d backward: gradient " + dy.shape_string() + " does not match output shape");
  ConvGrads<T> out{Tensor<T>(x.dims()), Tensor<T>(w.dims()), Tensor<T>({co})};
  const std::size_t in_stride = g.ci * g.h * g.w;
  const std::size_t out_stride = co * g.cols();
  std::vector<T> dw_parts(x.n() * w.size());
  parallel_for(x.n(), [&](std::size_t n) {
    std::vector<T> col(g.rows() * g.cols());
    im2col(x.data() + n * in_stride, g, col.data());
    const T* d = dy.data() + n * out_stride;
    gemm<T>(false, true, co, g.rows(), g.cols(), T(1), d, g.cols(), col.data(), g.cols(), T(0),
            dw_parts.data() + n * w.size(), g.rows());
    gemm<T>(true, false, g.rows(), g.cols(), co, T(1), w.data(), g.rows(), d, g.cols(), T(0), col.data(), g.cols());
    col2im(col.data(), g, out.dx.data() + n * in_stride);
  });
  // Fixed-order reductions over the batch.
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t i = 0; i < w.size(); ++i) out.dw[i] += dw_parts[n * w.size() + i];
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t o = 0; o < co; ++o) {
      const T* d = dy.data() + n * out_stride + o * g.cols();
      T s = 0;
      for (std::size_t i = 0; i < g.cols(); ++i) s += d[i];
      out.db[o] += s;
    }
  return out;
}

template <typename T>
Tensor<T> batchnorm_forward_train(const Tensor<T>& x, BatchNormParams<T>& p, BatchNormCache<T>* cache) {
  require_rank4(x, "batchnorm");
  if (x.n() < 2) throw ConfigError("batch-norm training mode needs batch >= 2, got " + std::to_string(x.n()));
  const std::size_t C = x.c(), P = x.plane(), N = x.n();
  if (p.gamma.size() != C) throw ShapeError("batchnorm: " + std::to_string(C) + " channels vs gamma " + p.gamma.shape_string());
  const double m = static_cast<double>(N * P);
  Tensor<T> y(x.dims());
  Tensor<T> xhat(x.dims());
  std::vector<T> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* v = x.data() + (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) s += v[i];
    }
    const double mean = s / m;
    double ss = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* v = x.data() + (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) ss += (v[i] - mean) * (v[i] - mean);
    }
    const double var = ss / m;
    const double is = 1.0 / std::sqrt(var + static_cast<double>(p.epsilon));
    inv_std[c] = static_cast<T>(is);
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) {
        const T xh = static_cast<T>((x[off + i] - mean) * is);
        xhat[off + i] = xh;
        y[off + i] = p.gamma[c] * xh + p.beta[c];
      }
    }
    p.running_mean[c] = (T(1) - p.momentum) * p.running_mean[c] + p.momentum * static_cast<T>(mean);
    p.running_var[c] = (T(1) - p.momentum) * p.running_var[c] + p.momentum * static_cast<T>(var * m / (m - 1.0));
  }
  if (cache) *cache = {std::move(xhat), std::move(inv_std)};
  return y;
}

template <typename T>
Tensor<T> batchnorm_forward_infer(const Tensor<T>& x, const BatchNormParams<T>& p) {
  require_rank4(x, "batchnorm");
  const std::size_t C = x.c(), P = x.plane();
  if (p.gamma.size() != C) throw ShapeError("batchnorm: " + std::to_string(C) + " channels vs gamma " + p.gamma.shape_string());
  Tensor<T> y(x.dims());
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T scale = p.gamma[c] / std::sqrt(p.running_var[c] + p.epsilon);
      const T shift = p.beta[c] - p.running_mean[c] * scale;
      const std::size_t off = (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) y[off + i] = x[off + i] * scale + shift;
    }
  return y;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& dy, const BatchNormCache<T>& cache, const Tensor<T>& gamma) {
  require_same_shape(dy, cache.xhat, "batchnorm backward");
  const std::size_t N = dy.n(), C = dy.c(), P = dy.plane();
  const double m = static_cast<double>(N * P);
  BatchNormGrads<T> g{Tensor<T>(dy.dims()), Tensor<T>({C}), Tensor<T>({C})};
  for (std::size_t c = 0; c < C; ++c) {
    double sdy = 0.0, sdyx = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) {
        sdy += dy[off + i];
        sdyx += static_cast<double>(dy[off + i]) * cache.xhat[off + i];
      }
    }
    g.dbeta[c] = static_cast<T>(sdy);
    g.dgamma[c] = static_cast<T>(sdyx);
    const double k = static_cast<double>(gamma[c]) * cache.inv_std[c] / m;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i)
        g.dx[off + i] = static_cast<T>(k * (m * dy[off + i] - sdy - cache.xhat[off + i] * sdyx));
    }
  }
  return g;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  require_same_shape(x, dy, "relu backward");
  Tensor<T> dx(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
  return dx;
}

template <typename T>
Tensor<T> maxpool2x2_forward(const Tensor<T>& x, std::vector<std::size_t>* argmax) {
  require_rank4(x, "maxpool2x2");
  if (x.h() % 2 || x.w() % 2) throw ShapeError("maxpool2x2: odd spatial size " + x.shape_string());
  const std::size_t ho = x.h() / 2, wo = x.w() / 2;
  Tensor<T> y(x.n(), x.c(), ho, wo);
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < x.n() * x.c(); ++nc) {
    const std::size_t base = nc * x.plane();
    for (std::size_t r = 0; r < ho; ++r)
      for (std::size_t c = 0; c < wo; ++c, ++o) {
        std::size_t best = base + 2 * r * x.w() + 2 * c;
        for (std::size_t idx : {best + 1, best + x.w(), best + x.w() + 1})
          if (x[idx] > x[best]) best = idx;
        y[o] = x[best];
        if (argmax) (*argmax)[o] = best;
      }
  }
  return y;
}

template <typename T>
Tensor<T> maxpool2x2_backward(const Tensor<T>& dy, const std::vector<std::size_t>& argmax,
                              const std::vector<std::size_t>& x_dims) {
  if (argmax.size() != dy.size()) throw ShapeError("maxpool2x2 backward: argmax/gradient size mismatch");
  Tensor<T> dx(x_dims);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

template <typename T>
Tensor<T> upsample2x_forward(const Tensor<T>& x) {
  require_rank4(x, "upsample2x");
  Tensor<T> y(x.n(), x.c(), 2 * x.h(), 2 * x.w());
  for (std::size_t nc = 0; nc < x.n() * x.c(); ++nc)
    for (std::size_t r = 0; r < y.h(); ++r)
      for (std::size_t c = 0; c < y.w(); ++c)
        y[nc * y.plane() + r * y.w() + c] = x[nc * x.plane() + (r / 2) * x.w() + c / 2];
  return y;
}

template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& dy) {
  require_rank4(dy, "upsample2x backward");
  if (dy.h() % 2 || dy.w() % 2) throw ShapeError("upsample2x backward: odd gradient " + dy.shape_string());
  Tensor<T> dx(dy.n(), dy.c(), dy.h() / 2, dy.w() / 2);
  for (std::size_t nc = 0; nc < dy.n() * dy.c(); ++nc)
    for (std::size_t r = 0; r < dy.h(); ++r)
      for (std::size_t c = 0; c < dy.w(); ++c)
        dx[nc * dx.plane() + (r / 2) * dx.w() + c / 2] += dy[nc * dy.plane() + r * dy.w() + c];
  return dx;
}

template <typename T>
Tensor<T> softmax_channels_forward(const Tensor<T>& x) {
  require_rank4(x, "softmax");
  const std::size_t C = x.c(), P = x.plane();
  Tensor<T> y(x.dims());
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t i = 0; i < P; ++i) {
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, x[(n * C + c) * P + i]);
      T s = 0;
      for (std::size_t c = 0; c < C; ++c) {
        const T e = std::exp(x[(n * C + c) * P + i] - mx);
        y[(n * C + c) * P + i] = e;
        s += e;
      }
      for (std::size_t c = 0; c < C; ++c) y[(n * C + c) * P + i] /= s;
    }
  return y;
}

template <typename T>
Tensor<T> softmax_channels_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  require_same_shape(y, dy, "softmax backward");
  const std::size_t C = y.c(), P = y.plane();
  Tensor<T> dx(y.dims());
  for (std::size_t n = 0; n < y.n(); ++n)
    for (std::size_t i = 0; i < P; ++i) {
      T dot = 0;
      for (std::size_t c = 0; c < C; ++c) dot += y[(n * C + c) * P + i] * dy[(n * C + c) * P + i];
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t k = (n * C + c) * P + i;
        dx[k] = y[k] * (dy[k] - dot);
      }
    }
  return dx;
}

template <typename T>
Tensor<T> concat_channels_forward(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Tensor<T>& first = *parts.front();
  require_rank4(first, "concat");
  std::size_t channels = 0;
  for (const auto* p : parts) {
    require_rank4(*p, "concat");
    if (p->n() != first.n() || p->h() != first.h() || p->w() != first.w())
      throw ShapeError("concat: " + p->shape_string() + " vs " + first.shape_string());
    channels += p->c();
  }
  Tensor<T> y(first.n(), channels, first.h(), first.w());
  const std::size_t P = first.plane();
  for (std::size_t n = 0; n < first.n(); ++n) {
    T* out = y.data() + n * channels * P;
    for (const auto* p : parts) {
      const T* src = p->data() + n * p->c() * P;
      out = std::copy(src, src + p->c() * P, out);
    }
  }
  return y;
}

template <typename T>
std::vector<Tensor<T>> concat_channels_backward(const Tensor<T>& dy, const std::vector<std::size_t>& channels) {
  require_rank4(dy, "concat backward");
  std::size_t total = 0;
  for (auto c : channels) total += c;
  if (total != dy.c()) throw ShapeError("concat backward: channel split does not sum to " + std::to_string(dy.c()));
  std::vector<Tensor<T>> out;
  for (auto c : channels) out.emplace_back(std::vector<std::size_t>{dy.n(), c, dy.h(), dy.w()});
  const std::size_t P = dy.plane();
  for (std::size_t n = 0; n < dy.n(); ++n) {
    const T* src = dy.data() + n * dy.c() * P;
    for (std::size_t k = 0; k < channels.size(); ++k) {
      const std::size_t len = channels[k] * P;
      std::copy(src, src + len, out[k].data() + n * len);
      src += len;
    }
  }
  return out;
}

template <typename T>
void he_normal_init(Tensor<T>& w, Tensor<T>& b, std::uint64_t seed) {
  require_rank4(w, "he_normal_init");
  const double sd = std::sqrt(2.0 / static_cast<double>(w.c() * w.h() * w.w()));
  Rng rng(seed);
  for (auto& v : w.values()) v = static_cast<T>(sd * rng.normal());
  b.fill(T(0));
}

#define SPECKLENET_INSTANTIATE(T)                                                                          \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,       \
                                    std::size_t);                                                            \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,   \
                                        std::size_t);                                                        \
  template Tensor<T> batchnorm_forward_train(const Tensor<T>&, BatchNormParams<T>&, BatchNormCache<T>*);     \
  template Tensor<T> batchnorm_forward_infer(const Tensor<T>&, const BatchNormParams<T>&);                   \
  template BatchNormGrads<T> batchnorm_backward(const Tensor<T>&, const BatchNormCache<T>&, const Tensor<T>&); \
  template Tensor<T> relu_forward(const Tensor<T>&);                                                         \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> maxpool2x2_forward(const Tensor<T>&, std::vector<std::size_t>*);                        \
  template Tensor<T> maxpool2x2_backward(const Tensor<T>&, const std::vector<std::size_t>&,                  \
                                         const std::vector<std::size_t>&);                                   \
  template Tensor<T> upsample2x_forward(const Tensor<T>&);                                                   \
  template Tensor<T> upsample2x_backward(const Tensor<T>&);                                                  \
  template Tensor<T> softmax_channels_forward(const Tensor<T>&);                                             \
  template Tensor<T> softmax_channels_backward(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> concat_channels_forward(const std::vector<const Tensor<T>*>&);                          \
  template std::vector<Tensor<T>> concat_channels_backward(const Tensor<T>&, const std::vector<std::size_t>&); \
  template void he_normal_init(Tensor<T>&, Tensor<T>&, std::uint64_t);

SPECKLENET_INSTANTIATE(float)
SPECKLENET_INSTANTIATE(double)

#undef SPECKLENET_INSTANTIATE

}  // namespace specklenet::nn
