#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "specklenet/error.hpp"
#include "specklenet/fft.hpp"
#include "specklenet/optics.hpp"
#include "specklenet/rng.hpp"
#include "specklenet/stats.hpp"

using namespace specklenet;
using namespace specklenet::optics;
using std::numbers::pi;

namespace {

double power(const Grid2D<Complex>& g) {
  double s = 0;
  for (auto v : g.values()) s += std::norm(v);
  return s;
}

ComplexField gaussian_beam(std::size_t n, double pitch, double w0, double lambda) {
  ComplexField f{Grid2D<Complex>(n, n), pitch, lambda};
  const double h = static_cast<double>(n / 2);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const double y = (static_cast<double>(r) - h) * pitch, x = (static_cast<double>(c) - h) * pitch;
      f.grid(r, c) = std::exp(-(x * x + y * y) / (w0 * w0));
    }
  return f;
}

// 1/e² intensity radius from the second moment along x: <x²> = w²/4.
double beam_radius(const ComplexField& f) {
  const std::size_t n = f.grid.rows();
  const double h = static_cast<double>(n / 2);
  double s = 0, sx2 = 0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const double x = (static_cast<double>(c) - h) * f.pitch;
      const double i = std::norm(f.grid(r, c));
      s += i;
      sx2 += i * x * x;
    }
  return 2.0 * std::sqrt(sx2 / s);
}

SystemConfig small_config() {
  SystemConfig c;
  c.grid_size = 128;
  c.object_region = 64;
  c.defocus = 3000;
  return c;
}

IntensityImage blank(const SystemConfig& c) { return {Grid2D<double>(c.grid_size, c.grid_size), c.object_pitch}; }

}  // namespace

TEST_SUITE("fft") {
  TEST_CASE("matches a direct DFT") {
    const std::size_t n = 8;
    Rng rng(3);
    Grid2D<Complex> x(n, n);
    for (auto& v : x.values()) v = Complex(rng.normal(), rng.normal());
    Grid2D<Complex> y = x;
    fft::forward(y);
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = 0; v < n; ++v) {
        Complex acc{};
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < n; ++c)
            acc += x(r, c) * std::polar(1.0, -2.0 * pi * static_cast<double>(u * r + v * c) / static_cast<double>(n));
        CHECK(std::abs(acc - y(u, v)) < 1e-10);
      }
    fft::inverse(y);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y.data()[i] - x.data()[i]) < 1e-12);
  }

  TEST_CASE("fftshift moves the origin to the center") {
    Grid2D<double> g(4, 4);
    g(0, 0) = 1;
    CHECK(fft::fftshift(g)(2, 2) == 1.0);
  }
}

TEST_SUITE("optics") {
  TEST_CASE("system config validation") {
    SystemConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.numerical_aperture() == doctest::Approx(0.0225));
    CHECK(c.speckle_size() == doctest::Approx(0.632 / 0.045));
    CHECK(c.magnification() == doctest::Approx(0.625));
    auto bad = c;
    bad.grid_size = 200;
    CHECK_THROWS_AS(bad.validate(), InvalidInputError);
    bad = c;
    bad.defocus = c.f1;
    CHECK_THROWS_AS(bad.validate(), InvalidInputError);
    bad = c;
    bad.pupil_diameter = 2.0 * c.f1;
    CHECK_THROWS_AS(bad.validate(), InvalidInputError);
    bad = c;
    bad.wavelength = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidInputError);
    bad = c;
    bad.object_region = 512;
    CHECK_THROWS_AS(bad.validate(), InvalidInputError);
  }

  TEST_CASE("Gaussian beam spreads as w0·sqrt(1 + (z/zR)²)") {
    const double lambda = 0.632, w0 = 20.0;
    const auto f0 = gaussian_beam(256, 2.0, w0, lambda);
    const double zr = pi * w0 * w0 / lambda;
    for (double z : {1000.0, 2000.0, -3000.0}) {
      const auto f = propagate_angular_spectrum(f0, z);
      CHECK(beam_radius(f) == doctest::Approx(w0 * std::sqrt(1 + (z / zr) * (z / zr))).epsilon(0.01));
      CHECK(power(f.grid) == doctest::Approx(power(f0.grid)).epsilon(1e-9));
    }
    CHECK(beam_radius(f0) == doctest::Approx(w0).epsilon(1e-6));
  }

  TEST_CASE("propagation by zero is the identity and ±z round-trips") {
    const auto f0 = gaussian_beam(128, 2.0, 15.0, 0.632);
    CHECK(propagate_angular_spectrum(f0, 0.0).grid == f0.grid);
    const auto back = propagate_angular_spectrum(propagate_angular_spectrum(f0, 500.0), -500.0);
    for (std::size_t i = 0; i < f0.grid.size(); ++i) CHECK(std::abs(back.grid.data()[i] - f0.grid.data()[i]) < 1e-9);
  }

  TEST_CASE("evanescent plane waves are removed") {
    // pitch 0.25 µm: the grid carries 1.75 cycles/µm > 1/λ = 1.58.
    const std::size_t n = 64;
    const double pitch = 0.25;
    ComplexField f{Grid2D<Complex>(n, n), pitch, 0.632};
    const double fx = 28.0 / (static_cast<double>(n) * pitch);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) f.grid(r, c) = std::polar(1.0, 2 * pi * fx * static_cast<double>(c) * pitch);
    CHECK(power(propagate_angular_spectrum(f, 1.0).grid) < 1e-20);
  }

  TEST_CASE("transfer function sampling limit") {
    ComplexField f{Grid2D<Complex>(256, 256), 8.0, 0.632};
    const double zmax = 256 * 64 / 0.632;
    CHECK(transfer_function_sampled(f, 0.99 * zmax));
    CHECK_FALSE(transfer_function_sampled(f, 1.01 * zmax));
    CHECK(transfer_function_sampled(f, -0.5 * zmax));
  }

  TEST_CASE("thin lens is a pure phase and f then -f cancels") {
    const auto f0 = gaussian_beam(64, 4.0, 40.0, 0.632);
    const auto l = apply_lens(f0, 5000.0);
    for (std::size_t i = 0; i < f0.grid.size(); ++i)
      CHECK(std::abs(std::abs(l.grid.data()[i]) - std::abs(f0.grid.data()[i])) < 1e-12);
    const auto back = apply_lens(l, -5000.0);
    for (std::size_t i = 0; i < f0.grid.size(); ++i) CHECK(std::abs(back.grid.data()[i] - f0.grid.data()[i]) < 1e-9);
    CHECK_THROWS_AS(apply_lens(f0, 0.0), InvalidInputError);
  }

  TEST_CASE("pupil of half the grid passes pi/16 of a uniform field") {
    const std::size_t n = 512;
    ComplexField f{Grid2D<Complex>(n, n, Complex(1.0, 0.0)), 1.0, 0.632};
    const double frac = power(apply_pupil(f, 256.0).grid) / power(f.grid);
    CHECK(frac == doctest::Approx(pi / 16).epsilon(0.005));
    CHECK(power(apply_pupil(f, 0.5).grid) == 0.0);
    CHECK_THROWS_AS(apply_pupil(f, -1.0), InvalidInputError);
  }

  TEST_CASE("diffuser statistics over 16 seeds") {
    SystemConfig c;
    c.grid_size = 256;  // 2048 µm span, 32 feature sizes
    std::vector<double> widths;
    for (std::uint64_t s = 0; s < 16; ++s) {
      const auto d = generate_diffuser(c, 63.0, 2 * pi, s);
      CHECK(stddev(d.phase_screen.values()) == doctest::Approx(2 * pi).epsilon(0.05));
      CHECK(std::abs(mean(d.phase_screen.values())) < 1e-9);
      const double w = correlation_width(d.phase_screen, c.object_pitch);
      CHECK(w == doctest::Approx(63.0).epsilon(0.25));
      widths.push_back(w);
    }
    CHECK(mean(widths) == doctest::Approx(63.0).epsilon(0.10));
  }

  TEST_CASE("diffuser regeneration is bit-identical and ids default from the seed") {
    const auto c = small_config();
    const auto a = generate_diffuser(c, 63.0, 2 * pi, 11);
    const auto b = generate_diffuser(c, 63.0, 2 * pi, 11);
    CHECK(a.phase_screen == b.phase_screen);
    CHECK(a.id == "D11");
    CHECK(generate_diffuser(c, 63.0, 2 * pi, 12).phase_screen != a.phase_screen);
    CHECK(generate_diffuser(c, 63.0, 0.0, 3).phase_screen == Grid2D<double>(c.grid_size, c.grid_size));
    CHECK_THROWS_AS(generate_diffuser(c, 10.0, 1.0, 1), InvalidInputError);
    CHECK_THROWS_AS(generate_diffuser(c, 63.0, -1.0, 1), InvalidInputError);
  }

  TEST_CASE("without scattering the system images the object") {
    auto c = small_config();
    c.slm_leak = 0.0;
    auto obj = blank(c);
    const double h = static_cast<double>(c.grid_size / 2);
    for (std::size_t r = 0; r < c.grid_size; ++r)
      for (std::size_t k = 0; k < c.grid_size; ++k) {
        const double y = static_cast<double>(r) - h - 5, x = static_cast<double>(k) - h + 3;
        obj.grid(r, k) = x * x + y * y < 15.0 * 15.0 ? 1.0 : 0.0;
      }
    const auto flat = generate_diffuser(c, 63.0, 0.0, 1);
    const auto img = register_to_object_frame(simulate_speckle(obj, flat, c).grid);
    CHECK(pearson(img.values(), obj.grid.values()) > 0.9);
  }

  TEST_CASE("relay inverts the image and scales amplitude by 1/M") {
    auto c = small_config();
    c.slm_leak = 0.0;
    const auto flat = generate_diffuser(c, 63.0, 0.0, 1);
    // A cosine grating below the cutoff passes unchanged apart from inversion.
    auto obj = blank(c);
    const std::size_t n = c.grid_size;
    const double fx = 8.0 / static_cast<double>(n);  // cycles per sample
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t k = 0; k < n; ++k) obj.grid(r, k) = 0.5 + 0.25 * std::cos(2 * pi * fx * static_cast<double>(k + 3 * r));
    c.object_region = n;
    const auto field = image_field(obj, flat, c);
    const double m = c.magnification();
    for (std::size_t r = 0; r < n; r += 7)
      for (std::size_t k = 0; k < n; k += 5) {
        const double expect = obj.grid((n - r) % n, (n - k) % n) / m;
        CHECK(std::abs(field.grid(r, k)) == doctest::Approx(expect).epsilon(1e-9));
      }
    // Above the cutoff only the mean survives.
    const double cutoff = c.numerical_aperture() / c.wavelength * c.object_pitch;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t k = 0; k < n; ++k)
        obj.grid(r, k) = 0.5 + 0.25 * std::cos(2 * pi * std::round(1.5 * cutoff * n) / static_cast<double>(n) *
                                                static_cast<double>(k));
    const auto cut = image_field(obj, flat, c);
    for (std::size_t i = 0; i < cut.grid.size(); i += 97) CHECK(std::abs(cut.grid.data()[i]) == doctest::Approx(0.5 / m).epsilon(1e-9));
  }

  TEST_CASE("registration undoes the inversion of a point") {
    auto c = small_config();
    c.slm_leak = 0.0;
    auto obj = blank(c);
    const std::size_t h = c.grid_size / 2;
    obj.grid(h + 10, h - 6) = 1.0;
    const auto flat = generate_diffuser(c, 63.0, 0.0, 1);
    const auto cam = simulate_speckle(obj, flat, c).grid;
    auto argmax = [](const Grid2D<double>& g) {
      return static_cast<std::size_t>(std::max_element(g.values().begin(), g.values().end()) - g.values().begin());
    };
    CHECK(argmax(cam) == (h - 10) * c.grid_size + (h + 6));
    CHECK(argmax(register_to_object_frame(cam)) == (h + 10) * c.grid_size + (h - 6));
    CHECK(register_to_object_frame(register_to_object_frame(cam)) == cam);
  }

  TEST_CASE("leak lights the whole window") {
    auto c = small_config();
    c.defocus = 1.0;
    const auto flat = generate_diffuser(c, 63.0, 0.0, 1);
    const auto img = register_to_object_frame(simulate_speckle(blank(c), flat, c).grid);
    const std::size_t h = c.grid_size / 2;
    const double m2 = c.magnification() * c.magnification();
    CHECK(img(h, h) * m2 == doctest::Approx(c.slm_leak * c.slm_leak).epsilon(0.05));
    CHECK(img(2, 2) * m2 < 0.01 * c.slm_leak * c.slm_leak);
  }

  TEST_CASE("input validation") {
    const auto c = small_config();
    const auto d = generate_diffuser(c, 63.0, 1.0, 1);
    IntensityImage wrong{Grid2D<double>(64, 64), c.object_pitch};
    CHECK_THROWS_AS(simulate_speckle(wrong, d, c), InvalidInputError);
    auto neg = blank(c);
    neg.grid(3, 3) = -0.5;
    CHECK_THROWS_AS(simulate_speckle(neg, d, c), InvalidInputError);
    auto pitch = blank(c);
    pitch.pitch = 4.0;
    CHECK_THROWS_AS(simulate_speckle(pitch, d, c), InvalidInputError);
    CHECK_THROWS_AS(measure_speckle_size({Grid2D<double>(32, 32, 1.0), 8.0}), DegenerateInputError);
    CHECK_THROWS_AS(measure_speckle_size({Grid2D<double>(8, 8, 1.0), 8.0}), InvalidInputError);
    CHECK_THROWS_AS(characterize_isoplanatism(d, c, 40), InvalidInputError);
  }

  TEST_CASE("speckle size of the default system") {
    SystemConfig c;
    const auto lit = uniform_illumination(c);
    for (std::uint64_t s : {1u, 2u}) {
      const double fwhm = measure_speckle_size(simulate_speckle(lit, generate_diffuser(c, 63.0, 2 * pi, s), c));
      CHECK(fwhm == doctest::Approx(c.speckle_size()).epsilon(0.25));
    }
  }

  TEST_CASE("speckle size scales inversely with the pupil") {
    SystemConfig c;
    const auto lit = uniform_illumination(c);
    const auto d = generate_diffuser(c, 63.0, 2 * pi, 4);
    const double big = measure_speckle_size(simulate_speckle(lit, d, c));
    c.pupil_diameter = 4500;
    const double small = measure_speckle_size(simulate_speckle(lit, d, c));
    CHECK(small / big == doctest::Approx(2.0).epsilon(0.2));
  }

  TEST_CASE("isoplanatism curve starts at one") {
    const auto c = small_config();
    const auto curve = characterize_isoplanatism(generate_diffuser(c, 63.0, 2 * pi, 1), c, 10);
    REQUIRE(curve.size() == 11);
    CHECK(curve[0].pcc == doctest::Approx(1.0));
    CHECK(curve[3].shift_um == doctest::Approx(24.0));
    CHECK(curve[10].pcc < 0.9);
  }

  TEST_CASE("border power of a uniform image is the ring area") {
    IntensityImage img{Grid2D<double>(100, 100, 2.0), 1.0};
    CHECK(border_power_fraction(img, 0.1) == doctest::Approx(1.0 - 0.8 * 0.8));
    CHECK(border_power_fraction(img, 0.0) == doctest::Approx(0.0));
  }

  TEST_CASE("correlation width of a known Gaussian") {
    // Deterministic screen exp(-r²/w²) has an autocorrelation of 1/e width w·√2.
    const std::size_t n = 256;
    Grid2D<double> g(n, n);
    const double w = 10.0, h = static_cast<double>(n / 2);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t k = 0; k < n; ++k) {
        const double y = static_cast<double>(r) - h, x = static_cast<double>(k) - h;
        g(r, k) = std::exp(-(x * x + y * y) / (w * w));
      }
    CHECK(correlation_width(g, 2.0) == doctest::Approx(2.0 * w * std::sqrt(2.0)).epsilon(0.05));
  }
}
