#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "specklenet/error.hpp"
#include "specklenet/model/network.hpp"
#include "specklenet/nn/loss.hpp"
#include "specklenet/rng.hpp"

using namespace specklenet;
using namespace specklenet::model;
using nn::Tensor;

namespace {

// BN (gamma, beta) plus a 3×3 conv with bias.
std::size_t unit_params(std::size_t cin, std::size_t cout) { return 2 * cin + 9 * cin * cout + cout; }

std::size_t expected_params(const ArchSpec& a) {
  const std::size_t L = a.layers_per_block, g = a.growth;
  std::size_t n = 9 * a.stem_channels + a.stem_channels;
  std::size_t c = a.stem_channels;
  std::vector<std::size_t> skips;
  for (std::size_t b = 0; b < a.encoder_blocks; ++b) {
    for (std::size_t l = 0; l < L; ++l) n += unit_params(c + l * g, g);
    c += L * g;
    skips.push_back(c);
  }
  for (std::size_t b = 0; b < a.decoder_blocks; ++b) {
    n += unit_params(c, g);
    const std::size_t cin = g + (a.skip_connections ? skips[a.encoder_blocks - 1 - b] : 0);
    for (std::size_t l = 0; l < L; ++l) n += unit_params(cin + l * g, g);
    c = L * g;
  }
  return n + unit_params(c, 2);
}

ArchSpec tiny_arch() {
  ArchSpec a;
  a.input_size = 8;
  a.encoder_blocks = a.decoder_blocks = 2;
  a.layers_per_block = 2;
  a.growth = 3;
  a.stem_channels = 3;
  return a;
}

template <typename T>
Tensor<T> random_input(std::size_t n, std::size_t s, std::uint64_t seed) {
  Tensor<T> x(n, 1, s, s);
  Rng r(seed);
  for (auto& v : x.values()) v = static_cast<T>(r.uniform());
  return x;
}

Tensor<double> random_target(std::size_t n, std::size_t s, std::uint64_t seed) {
  Tensor<double> t(n, 2, s, s);
  Rng r(seed);
  const std::size_t P = s * s;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < P; ++i) {
      const double v = r.uniform() < 0.4 ? 1.0 : 0.0;
      t[(b * 2) * P + i] = v;
      t[(b * 2 + 1) * P + i] = 1 - v;
    }
  return t;
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("parameter count matches the closed form") {
    ArchSpec a;
    a.input_size = 16;
    a.encoder_blocks = a.decoder_blocks = 2;
    a.layers_per_block = 2;
    a.growth = 4;
    a.stem_channels = 4;
    // Hand tally: stem 40; encoder 156+308+460+612; decoder 764+916+1068 and 308+612+764; head 162.
    CHECK(DenseUNet<float>(a, Task::binary, 1).parameter_count() == 6170);
    CHECK(expected_params(a) == 6170);
    for (bool skip : {true, false}) {
      ArchSpec d;  // default topology
      d.skip_connections = skip;
      CHECK(DenseUNet<float>(d, Task::binary, 1).parameter_count() == expected_params(d));
    }
  }

  TEST_CASE("topology validation") {
    ArchSpec a = tiny_arch();
    a.decoder_blocks = 1;
    CHECK_THROWS_AS(DenseUNet<float>(a, Task::binary, 0), ConfigError);
    a = tiny_arch();
    a.input_size = 6;
    CHECK_THROWS_AS(DenseUNet<float>(a, Task::binary, 0), ConfigError);
    DenseUNet<float> net(tiny_arch(), Task::binary, 0);
    CHECK_THROWS_AS((void)net.infer(Tensor<float>(1, 1, 4, 4)), ShapeError);
    CHECK_THROWS_AS((void)net.infer(Tensor<float>(1, 2, 8, 8)), ShapeError);
  }

  TEST_CASE("initialization is seed-determined") {
    DenseUNet<float> a(tiny_arch(), Task::binary, 5), b(tiny_arch(), Task::binary, 5), c(tiny_arch(), Task::binary, 6);
    const auto x = random_input<float>(2, 8, 1);
    CHECK(a.infer(x) == b.infer(x));
    CHECK(!(a.infer(x) == c.infer(x)));
  }

  TEST_CASE("end-to-end gradient spot checks in double precision") {
    for (bool skip : {true, false}) {
      ArchSpec arch = tiny_arch();
      arch.skip_connections = skip;
      DenseUNet<double> net(arch, Task::binary, 3);
      const auto x = random_input<double>(2, 8, 4);
      const auto g = random_target(2, 8, 5);
      auto loss_at = [&] { return nn::cross_entropy_loss(net.forward_train(x), g).loss; };
      net.zero_grad();
      const auto res = nn::cross_entropy_loss(net.forward_train(x), g);
      net.backward(res.grad);
      auto params = net.parameters();
      Rng pick(6);
      const double h = 1e-6;
      double worst = 0;
      std::size_t checked = 0;
      for (auto& p : params) {
        // Three entries from every parameter tensor.
        for (int k = 0; k < 3; ++k) {
          const auto i = static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(p.value->size()) - 1));
          const double keep = (*p.value)[i];
          (*p.value)[i] = keep + h;
          const double up = loss_at();
          (*p.value)[i] = keep - h;
          const double down = loss_at();
          (*p.value)[i] = keep;
          const double fd = (up - down) / (2 * h), an = (*p.grad)[i];
          if (std::abs(fd) + std::abs(an) < 1e-8) continue;  // FD noise floor
          worst = std::max(worst, std::abs(fd - an) / (std::abs(fd) + std::abs(an)));
          ++checked;
        }
      }
      CHECK(checked > params.size());
      CHECK(worst < 1e-3);
    }
  }

  TEST_CASE("activation taps") {
    const ArchSpec arch = tiny_arch();
    DenseUNet<float> net(arch, Task::binary, 7);
    const auto x = random_input<float>(3, 8, 8);
    std::vector<std::size_t> taps(arch.activation_layers());
    for (std::size_t i = 0; i < taps.size(); ++i) taps[i] = i;
    const auto acts = net.activations(x, taps);
    REQUIRE(acts.size() == 5);
    for (std::size_t i = 0; i < acts.size(); ++i) {
      CHECK(acts[i].n() == 3);
      CHECK(acts[i].h() == arch.activation_size(i));
    }
    CHECK(acts[0].c() == arch.encoder_channels(0));
    CHECK(acts[2].c() == arch.decoder_channels());
    CHECK(acts[4] == net.infer(x));
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(std::all_of(acts[i].values().begin(), acts[i].values().end(), [](float v) { return v >= 0; }));
    CHECK_THROWS_AS((void)net.activations(x, {5}), RangeError);
  }

  TEST_CASE("precision conversion preserves the function") {
    DenseUNet<float> net(tiny_arch(), Task::binary, 9);
    const auto x = random_input<float>(2, 8, 10);
    (void)net.forward_train(x);  // moves running statistics off their defaults
    const auto yf = net.infer(x);
    const auto yd = net.converted<double>().infer(x.cast<double>());
    for (std::size_t i = 0; i < yf.size(); ++i) CHECK(std::abs(yf[i] - yd[i]) < 1e-5);
    CHECK(net.converted<double>().converted<float>().infer(x) == yf);
  }

  TEST_CASE("prediction rules") {
    DenseUNet<float> net(tiny_arch(), Task::binary, 11);
    const auto x = random_input<float>(2, 8, 12);
    const auto prob = net.infer(x);
    const auto pred = predict(net, x);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 64; ++i) {
        const float o = pred.object[n * 64 + i];
        CHECK(o == (prob[(n * 2) * 64 + i] > prob[(n * 2 + 1) * 64 + i] ? 1.0f : 0.0f));
        CHECK(pred.background[n * 64 + i] == 1.0f - o);
      }
    DenseUNet<float> gray(tiny_arch(), Task::grayscale, 11);
    const auto gp = predict(gray, x);
    for (float v : gp.object.values()) CHECK(std::abs(v * 255.0f - std::round(v * 255.0f)) < 1e-3f);
  }
}
