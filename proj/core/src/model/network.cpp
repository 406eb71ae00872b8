#include "specklenet/model/network.hpp"

#include <cmath>
#include <type_traits>

#include "specklenet/error.hpp"
#include "specklenet/rng.hpp"

namespace specklenet::model {

using nn::Tensor;

namespace {

template <typename T>
typename DenseUNet<T>::Conv make_conv(std::size_t cin, std::size_t cout, std::uint64_t seed) {
  typename DenseUNet<T>::Conv c{Tensor<T>(cout, cin, 3, 3), Tensor<T>({cout}), Tensor<T>(cout, cin, 3, 3),
                                Tensor<T>({cout})};
  nn::he_normal_init(c.w, c.b, seed);
  return c;
}

template <typename T>
typename DenseUNet<T>::BN make_bn(std::size_t channels) {
  typename DenseUNet<T>::BN bn;
  bn.p.gamma = Tensor<T>({channels}, T(1));
  bn.p.beta = Tensor<T>({channels});
  bn.p.running_mean = Tensor<T>({channels});
  bn.p.running_var = Tensor<T>({channels}, T(1));
  bn.dgamma = Tensor<T>({channels});
  bn.dbeta = Tensor<T>({channels});
  return bn;
}

template <typename T>
typename DenseUNet<T>::Unit make_unit(std::size_t cin, std::size_t cout, bool upsample, std::uint64_t seed,
                                      const std::string& name) {
  return {make_bn<T>(cin), make_conv<T>(cin, cout, derive_seed(seed, name + ".conv.w")), upsample};
}

template <typename T>
void add_into(Tensor<T>& acc, const Tensor<T>& v) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
}

template <typename From, typename To>
Tensor<To> convert(const Tensor<From>& t) {
  return t.empty() ? Tensor<To>() : t.template cast<To>();
}

}  // namespace

template <typename T>
DenseUNet<T>::DenseUNet(const ArchSpec& arch, Task task, std::uint64_t seed) : arch_(arch), task_(task) {
  arch_.validate();
  const std::size_t L = arch_.layers_per_block, g = arch_.growth;
  stem_ = make_conv<T>(1, arch_.stem_channels, derive_seed(seed, "stem.conv.w"));
  std::size_t c = arch_.stem_channels;
  std::vector<std::size_t> skips;
  for (std::size_t b = 0; b < arch_.encoder_blocks; ++b) {
    Block blk;
    for (std::size_t l = 0; l < L; ++l)
      blk.units.push_back(make_unit<T>(c + l * g, g, false, seed, "enc" + std::to_string(b) + ".l" + std::to_string(l)));
    c += L * g;
    skips.push_back(c);
    enc_.push_back(std::move(blk));
  }
  for (std::size_t b = 0; b < arch_.decoder_blocks; ++b) {
    const std::string name = "dec" + std::to_string(b);
    up_.push_back(make_unit<T>(c, g, true, seed, name + ".up"));
    const std::size_t cin = g + (arch_.skip_connections ? skips[arch_.encoder_blocks - 1 - b] : 0);
    Block blk;
    blk.keep_input = false;
    for (std::size_t l = 0; l < L; ++l)
      blk.units.push_back(make_unit<T>(cin + l * g, g, false, seed, name + ".l" + std::to_string(l)));
    c = L * g;
    dec_.push_back(std::move(blk));
  }
  head_ = make_unit<T>(c, 2, false, seed, "head");
}

template <typename T>
void DenseUNet<T>::check_input(const Tensor<T>& x) const {
  const std::size_t s = arch_.input_size;
  if (x.rank() != 4 || x.c() != 1 || x.h() != s || x.w() != s)
    throw ShapeError("network input must be (N, 1, " + std::to_string(s) + ", " + std::to_string(s) + "), got " +
                     x.shape_string());
}

template <typename T>
template <typename U>
Tensor<T> DenseUNet<T>::run_unit(U& u, const Tensor<T>& x, UnitCache* cache) {
  Tensor<T> h;
  if constexpr (std::is_const_v<U>) {
    h = nn::batchnorm_forward_infer(x, u.bn.p);
  } else {
    h = nn::batchnorm_forward_train(x, u.bn.p, &cache->bn);
  }
  Tensor<T> a = nn::relu_forward(h);
  if (u.upsample) a = nn::upsample2x_forward(a);
  Tensor<T> y = nn::conv2d_forward(a, u.conv.w, u.conv.b, 1, 1);
  if constexpr (!std::is_const_v<U>) {
    cache->bn_out = std::move(h);
    cache->conv_in = std::move(a);
  }
  return y;
}

template <typename T>
template <typename B>
Tensor<T> DenseUNet<T>::run_block(B& b, const Tensor<T>& x, BlockCache* cache) {
  std::vector<Tensor<T>> feats;
  feats.push_back(x);
  if constexpr (!std::is_const_v<B>) cache->units.resize(b.units.size());
  for (std::size_t l = 0; l < b.units.size(); ++l) {
    std::vector<const Tensor<T>*> parts;
    for (const auto& f : feats) parts.push_back(&f);
    const Tensor<T> in = feats.size() == 1 ? feats.front() : nn::concat_channels_forward(parts);
    UnitCache* uc = nullptr;
    if constexpr (!std::is_const_v<B>) uc = &cache->units[l];
    feats.push_back(run_unit(b.units[l], in, uc));
  }
  if constexpr (!std::is_const_v<B>) {
    cache->channels.clear();
    for (const auto& f : feats) cache->channels.push_back(f.c());
  }
  std::vector<const Tensor<T>*> out;
  for (std::size_t i = b.keep_input ? 0 : 1; i < feats.size(); ++i) out.push_back(&feats[i]);
  return nn::concat_channels_forward(out);
}

template <typename T>
template <typename Self>
Tensor<T> DenseUNet<T>::run(Self& self, const Tensor<T>& x, Cache* cache, std::vector<Tensor<T>>* taps) {
  constexpr bool training = !std::is_const_v<Self>;
  self.check_input(x);
  const std::size_t E = self.arch_.encoder_blocks;
  if constexpr (training) {
    cache->input = x;
    cache->enc.assign(E, {});
    cache->dec.assign(self.dec_.size(), {});
    cache->up.assign(self.up_.size(), {});
    cache->pool_argmax.assign(E, {});
    cache->pool_dims.assign(E, {});
    cache->skip_channels.assign(E, 0);
  }
  Tensor<T> h = nn::conv2d_forward(x, self.stem_.w, self.stem_.b, 1, 1);
  std::vector<Tensor<T>> skips;
  for (std::size_t b = 0; b < E; ++b) {
    BlockCache* bc = nullptr;
    if constexpr (training) bc = &cache->enc[b];
    Tensor<T> out = run_block(self.enc_[b], h, bc);
    if (taps) taps->push_back(nn::relu_forward(out));
    std::vector<std::size_t>* argmax = nullptr;
    if constexpr (training) {
      argmax = &cache->pool_argmax[b];
      cache->pool_dims[b] = out.dims();
      cache->skip_channels[b] = out.c();
    }
    h = nn::maxpool2x2_forward(out, argmax);
    skips.push_back(std::move(out));
  }
  for (std::size_t b = 0; b < self.dec_.size(); ++b) {
    UnitCache* uc = nullptr;
    BlockCache* bc = nullptr;
    if constexpr (training) {
      uc = &cache->up[b];
      bc = &cache->dec[b];
    }
    Tensor<T> u = run_unit(self.up_[b], h, uc);
    if (self.arch_.skip_connections) u = nn::concat_channels_forward<T>({&u, &skips[E - 1 - b]});
    h = run_block(self.dec_[b], u, bc);
    if (taps) taps->push_back(nn::relu_forward(h));
  }
  UnitCache* hc = nullptr;
  if constexpr (training) hc = &cache->head;
  Tensor<T> prob = nn::softmax_channels_forward(run_unit(self.head_, h, hc));
  if (taps) taps->push_back(prob);
  if constexpr (training) {
    cache->prob = prob;
    cache->valid = true;
  }
  return prob;
}

template <typename T>
Tensor<T> DenseUNet<T>::forward_train(const Tensor<T>& x) {
  return run(*this, x, &cache_, nullptr);
}

template <typename T>
Tensor<T> DenseUNet<T>::infer(const Tensor<T>& x) const {
  return run(*this, x, nullptr, nullptr);
}

template <typename T>
std::vector<Tensor<T>> DenseUNet<T>::activations(const Tensor<T>& x, const std::vector<std::size_t>& taps) const {
  for (auto t : taps)
    if (t >= arch_.activation_layers())
      throw RangeError("activation tap " + std::to_string(t) + " out of range [0, " +
                       std::to_string(arch_.activation_layers()) + ")");
  std::vector<Tensor<T>> all;
  run(*this, x, nullptr, &all);
  std::vector<Tensor<T>> out;
  for (auto t : taps) out.push_back(all[t]);
  return out;
}

template <typename T>
Tensor<T> DenseUNet<T>::unit_backward(Unit& u, const UnitCache& c, const Tensor<T>& dy) {
  auto cg = nn::conv2d_backward(c.conv_in, u.conv.w, dy, 1, 1);
  add_into(u.conv.dw, cg.dw);
  add_into(u.conv.db, cg.db);
  Tensor<T> da = u.upsample ? nn::upsample2x_backward(cg.dx) : std::move(cg.dx);
  Tensor<T> dh = nn::relu_backward(c.bn_out, da);
  auto bg = nn::batchnorm_backward(dh, c.bn, u.bn.p.gamma);
  add_into(u.bn.dgamma, bg.dgamma);
  add_into(u.bn.dbeta, bg.dbeta);
  return std::move(bg.dx);
}

template <typename T>
Tensor<T> DenseUNet<T>::block_backward(Block& b, const BlockCache& c, const Tensor<T>& dy) {
  const std::size_t L = b.units.size();
  std::vector<Tensor<T>> dfeat(L + 1);
  std::vector<std::size_t> out_channels(c.channels.begin() + (b.keep_input ? 0 : 1), c.channels.end());
  auto parts = nn::concat_channels_backward(dy, out_channels);
  if (b.keep_input) {
    for (std::size_t i = 0; i <= L; ++i) dfeat[i] = std::move(parts[i]);
  } else {
    dfeat[0] = Tensor<T>(dy.n(), c.channels[0], dy.h(), dy.w());
    for (std::size_t i = 0; i < L; ++i) dfeat[i + 1] = std::move(parts[i]);
  }
  for (std::size_t l = L; l-- > 0;) {
    Tensor<T> din = unit_backward(b.units[l], c.units[l], dfeat[l + 1]);
    if (l == 0) {
      add_into(dfeat[0], din);
      continue;
    }
    auto split = nn::concat_channels_backward(
        din, std::vector<std::size_t>(c.channels.begin(), c.channels.begin() + static_cast<long>(l) + 1));
    for (std::size_t i = 0; i <= l; ++i) add_into(dfeat[i], split[i]);
  }
  return std::move(dfeat[0]);
}

template <typename T>
void DenseUNet<T>::backward(const Tensor<T>& dprob) {
  if (!cache_.valid) throw ConfigError("backward called without a preceding forward_train");
  require_same_shape(dprob, cache_.prob, "network backward");
  const std::size_t E = arch_.encoder_blocks;
  Tensor<T> d = unit_backward(head_, cache_.head, nn::softmax_channels_backward(cache_.prob, dprob));
  std::vector<Tensor<T>> dskip(E);
  for (std::size_t b = dec_.size(); b-- > 0;) {
    Tensor<T> dcat = block_backward(dec_[b], cache_.dec[b], d);
    Tensor<T> du;
    if (arch_.skip_connections) {
      auto parts = nn::concat_channels_backward(dcat, {arch_.growth, cache_.skip_channels[E - 1 - b]});
      du = std::move(parts[0]);
      dskip[E - 1 - b] = std::move(parts[1]);
    } else {
      du = std::move(dcat);
    }
    d = unit_backward(up_[b], cache_.up[b], du);
  }
  for (std::size_t b = E; b-- > 0;) {
    Tensor<T> dout = nn::maxpool2x2_backward(d, cache_.pool_argmax[b], cache_.pool_dims[b]);
    if (arch_.skip_connections) add_into(dout, dskip[b]);
    d = block_backward(enc_[b], cache_.enc[b], dout);
  }
  auto sg = nn::conv2d_backward(cache_.input, stem_.w, d, 1, 1);
  add_into(stem_.dw, sg.dw);
  add_into(stem_.db, sg.db);
  cache_.valid = false;
}

template <typename T>
std::vector<ParamRef<T>> DenseUNet<T>::parameters() {
  std::vector<ParamRef<T>> out;
  auto conv = [&](const std::string& n, Conv& c) {
    out.push_back({n + ".conv.w", &c.w, &c.dw});
    out.push_back({n + ".conv.b", &c.b, &c.db});
  };
  auto unit = [&](const std::string& n, Unit& u) {
    out.push_back({n + ".bn.gamma", &u.bn.p.gamma, &u.bn.dgamma});
    out.push_back({n + ".bn.beta", &u.bn.p.beta, &u.bn.dbeta});
    conv(n, u.conv);
  };
  conv("stem", stem_);
  for (std::size_t b = 0; b < enc_.size(); ++b)
    for (std::size_t l = 0; l < enc_[b].units.size(); ++l)
      unit("enc" + std::to_string(b) + ".l" + std::to_string(l), enc_[b].units[l]);
  for (std::size_t b = 0; b < dec_.size(); ++b) {
    unit("dec" + std::to_string(b) + ".up", up_[b]);
    for (std::size_t l = 0; l < dec_[b].units.size(); ++l)
      unit("dec" + std::to_string(b) + ".l" + std::to_string(l), dec_[b].units[l]);
  }
  unit("head", head_);
  return out;
}

template <typename T>
std::vector<BufferRef<T>> DenseUNet<T>::buffers() {
  std::vector<BufferRef<T>> out;
  auto unit = [&](const std::string& n, Unit& u) {
    out.push_back({n + ".bn.running_mean", &u.bn.p.running_mean});
    out.push_back({n + ".bn.running_var", &u.bn.p.running_var});
  };
  for (std::size_t b = 0; b < enc_.size(); ++b)
    for (std::size_t l = 0; l < enc_[b].units.size(); ++l)
      unit("enc" + std::to_string(b) + ".l" + std::to_string(l), enc_[b].units[l]);
  for (std::size_t b = 0; b < dec_.size(); ++b) {
    unit("dec" + std::to_string(b) + ".up", up_[b]);
    for (std::size_t l = 0; l < dec_[b].units.size(); ++l)
      unit("dec" + std::to_string(b) + ".l" + std::to_string(l), dec_[b].units[l]);
  }
  unit("head", head_);
  return out;
}

template <typename T>
void DenseUNet<T>::zero_grad() {
  for (auto& p : parameters()) p.grad->fill(T(0));
}

template <typename T>
std::size_t DenseUNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : const_cast<DenseUNet*>(this)->parameters()) n += p.value->size();
  return n;
}

template <typename T>
template <typename U>
DenseUNet<U> DenseUNet<T>::converted() const {
  DenseUNet<U> out;
  out.arch_ = arch_;
  out.task_ = task_;
  auto conv = [](const Conv& c) {
    return typename DenseUNet<U>::Conv{convert<T, U>(c.w), convert<T, U>(c.b), convert<T, U>(c.dw), convert<T, U>(c.db)};
  };
  auto unit = [&](const Unit& u) {
    typename DenseUNet<U>::Unit v;
    v.bn.p.gamma = convert<T, U>(u.bn.p.gamma);
    v.bn.p.beta = convert<T, U>(u.bn.p.beta);
    v.bn.p.running_mean = convert<T, U>(u.bn.p.running_mean);
    v.bn.p.running_var = convert<T, U>(u.bn.p.running_var);
    v.bn.p.momentum = static_cast<U>(u.bn.p.momentum);
    v.bn.p.epsilon = static_cast<U>(u.bn.p.epsilon);
    v.bn.dgamma = convert<T, U>(u.bn.dgamma);
    v.bn.dbeta = convert<T, U>(u.bn.dbeta);
    v.conv = conv(u.conv);
    v.upsample = u.upsample;
    return v;
  };
  auto block = [&](const Block& b) {
    typename DenseUNet<U>::Block v;
    v.keep_input = b.keep_input;
    for (const auto& u : b.units) v.units.push_back(unit(u));
    return v;
  };
  out.stem_ = conv(stem_);
  for (const auto& b : enc_) out.enc_.push_back(block(b));
  for (const auto& b : dec_) out.dec_.push_back(block(b));
  for (const auto& u : up_) out.up_.push_back(unit(u));
  out.head_ = unit(head_);
  return out;
}

template class DenseUNet<float>;
template class DenseUNet<double>;
template DenseUNet<double> DenseUNet<float>::converted<double>() const;
template DenseUNet<float> DenseUNet<double>::converted<float>() const;

Prediction predict(const DenseUNet<float>& net, const Tensor<float>& input) {
  const Tensor<float> prob = net.infer(input);
  const std::size_t N = prob.n(), P = prob.plane();
  Prediction out{Tensor<float>(N, 1, prob.h(), prob.w()), Tensor<float>(N, 1, prob.h(), prob.w())};
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < P; ++i) {
      const float p0 = prob[(n * 2) * P + i];
      const float p1 = prob[(n * 2 + 1) * P + i];
      float obj;
      if (net.task() == Task::binary) {
        obj = p0 > p1 ? 1.0f : 0.0f;
      } else {
        obj = static_cast<float>(std::lround(static_cast<double>(p0) * 255.0)) / 255.0f;
      }
      out.object[n * P + i] = obj;
      out.background[n * P + i] = 1.0f - obj;
    }
  return out;
}

}  // namespace specklenet::model
