#include "specklenet/optics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "specklenet/error.hpp"
#include "specklenet/fft.hpp"
#include "specklenet/rng.hpp"
#include "specklenet/stats.hpp"

namespace specklenet::optics {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void require_square(const Grid2D<Complex>& g, const char* what) {
  if (!g.is_square() || g.empty())
    throw InvalidInputError(std::string(what) + ": field grid must be square and non-empty, got " +
                            std::to_string(g.rows()) + "x" + std::to_string(g.cols()));
}

// Angular-spectrum transfer function for one frequency bin; zero when the
// component is evanescent or beyond the band limit for this distance.
Complex transfer(double fx, double fy, double wavelength, double distance, double flimit) {
  const double arg = 1.0 / (wavelength * wavelength) - fx * fx - fy * fy;
  if (arg <= 0.0 || std::abs(fx) > flimit || std::abs(fy) > flimit) return {0.0, 0.0};
  const double phase = 2.0 * kPi * distance * std::sqrt(arg);
  return {std::cos(phase), std::sin(phase)};
}

double band_limit(std::size_t n, double pitch, double wavelength, double distance) {
  const double df = 1.0 / (static_cast<double>(n) * pitch);
  const double t = 2.0 * df * std::abs(distance);
  return 1.0 / (wavelength * std::sqrt(t * t + 1.0));
}

// Biased autocorrelation of a zero-mean real grid, zero-padded to avoid
// circular wrap, normalized to 1 at zero lag. Returned unshifted.
Grid2D<double> normalized_autocorrelation(const Grid2D<double>& centered) {
  const std::size_t n = centered.rows();
  const std::size_t m = 2 * n;
  Grid2D<Complex> buf(m, m);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) buf(r, c) = centered(r, c);
  fft::forward(buf);
  for (auto& v : buf.values()) v = std::norm(v);
  fft::inverse(buf);
  Grid2D<double> out(m, m);
  const double zero = buf(0, 0).real();
  for (std::size_t i = 0; i < buf.size(); ++i) out.data()[i] = buf.data()[i].real() / zero;
  return out;
}

// Average of the autocorrelation along the four axis directions at lag k.
std::vector<double> axis_profile(const Grid2D<double>& ac, std::size_t max_lag) {
  const std::size_t m = ac.rows();
  std::vector<double> p(max_lag);
  for (std::size_t k = 0; k < max_lag; ++k) {
    p[k] = 0.25 * (ac(0, k) + ac(0, (m - k) % m) + ac(k, 0) + ac((m - k) % m, 0));
  }
  return p;
}

// First lag where the profile drops to `level`, linearly interpolated.
double crossing(const std::vector<double>& p, double level) {
  for (std::size_t k = 1; k < p.size(); ++k) {
    if (p[k] <= level) {
      const double a = p[k - 1], b = p[k];
      return static_cast<double>(k - 1) + (a - level) / (a - b);
    }
  }
  return static_cast<double>(p.size());
}

Grid2D<double> centered_copy(const Grid2D<double>& g) {
  const double m = mean(g.values());
  Grid2D<double> out = g;
  for (auto& v : out.values()) v -= m;
  return out;
}

}  // namespace

void SystemConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw InvalidInputError(std::string("SystemConfig.") + name + " must be positive");
  };
  positive(wavelength, "wavelength");
  positive(f1, "f1");
  positive(f2, "f2");
  positive(pupil_diameter, "pupil_diameter");
  positive(object_pitch, "object_pitch");
  positive(defocus, "defocus");
  positive(refractive_index, "refractive_index");
  if (!is_power_of_two(grid_size))
    throw InvalidInputError("SystemConfig.grid_size must be a power of two, got " +
                            std::to_string(grid_size));
  if (defocus >= f1) throw InvalidInputError("SystemConfig.defocus must be smaller than f1");
  const double na = numerical_aperture();
  if (!(na > 0.0 && na < 1.0)) throw InvalidInputError("numerical aperture must lie in (0, 1)");
  if (object_region == 0 || object_region > grid_size || object_region % 2 != 0)
    throw InvalidInputError("SystemConfig.object_region must be even and at most grid_size");
  if (slm_leak < 0.0 || slm_leak >= 1.0)
    throw InvalidInputError("SystemConfig.slm_leak must lie in [0, 1)");
}

double ComplexField::power() const {
  double p = 0.0;
  for (const auto& v : grid.values()) p += std::norm(v);
  return p;
}

bool transfer_function_sampled(const ComplexField& field, double distance) {
  const double n = static_cast<double>(field.grid.rows());
  return std::abs(distance) <= n * field.pitch * field.pitch / field.wavelength;
}

ComplexField propagate_angular_spectrum(const ComplexField& field, double distance) {
  require_square(field.grid, "propagate_angular_spectrum");
  const std::size_t n = field.grid.rows();
  ComplexField out = field;
  if (distance == 0.0) return out;
  fft::forward(out.grid);
  const double df = 1.0 / (static_cast<double>(n) * field.pitch);
  const double flimit = band_limit(n, field.pitch, field.wavelength, distance);
  for (std::size_t r = 0; r < n; ++r) {
    const double fy = static_cast<double>(fft::signed_index(r, n)) * df;
    for (std::size_t c = 0; c < n; ++c) {
      const double fx = static_cast<double>(fft::signed_index(c, n)) * df;
      out.grid(r, c) *= transfer(fx, fy, field.wavelength, distance, flimit);
    }
  }
  fft::inverse(out.grid);
  return out;
}

ComplexField apply_lens(const ComplexField& field, double focal_length) {
  require_square(field.grid, "apply_lens");
  if (focal_length == 0.0 || !std::isfinite(focal_length))
    throw InvalidInputError("apply_lens: focal length must be finite and non-zero");
  ComplexField out = field;
  const std::size_t n = field.grid.rows();
  const double half = static_cast<double>(n / 2);
  const double k = kPi / (field.wavelength * focal_length);
  for (std::size_t r = 0; r < n; ++r) {
    const double y = (static_cast<double>(r) - half) * field.pitch;
    for (std::size_t c = 0; c < n; ++c) {
      const double x = (static_cast<double>(c) - half) * field.pitch;
      const double phase = -k * (x * x + y * y);
      out.grid(r, c) *= Complex(std::cos(phase), std::sin(phase));
    }
  }
  return out;
}

ComplexField apply_pupil(const ComplexField& field, double diameter) {
  require_square(field.grid, "apply_pupil");
  if (!(diameter > 0.0)) throw InvalidInputError("apply_pupil: diameter must be positive");
  ComplexField out = field;
  if (diameter < field.pitch) {
    out.grid.fill(Complex{});
    return out;
  }
  const std::size_t n = field.grid.rows();
  const double half = static_cast<double>(n / 2);
  const double r2max = 0.25 * diameter * diameter;
  for (std::size_t r = 0; r < n; ++r) {
    const double y = (static_cast<double>(r) - half) * field.pitch;
    for (std::size_t c = 0; c < n; ++c) {
      const double x = (static_cast<double>(c) - half) * field.pitch;
      if (x * x + y * y > r2max) out.grid(r, c) = Complex{};
    }
  }
  return out;
}

Diffuser generate_diffuser(const SystemConfig& cfg, double feature_size, double phase_std,
                           std::uint64_t seed, std::string id) {
  cfg.validate();
  if (!(feature_size >= 2.0 * cfg.object_pitch))
    throw InvalidInputError("generate_diffuser: feature size " + std::to_string(feature_size) +
                            " um is below two samples (" +
                            std::to_string(2.0 * cfg.object_pitch) + " um)");
  if (!(phase_std >= 0.0)) throw InvalidInputError("generate_diffuser: phase_std must be >= 0");

  const std::size_t n = cfg.grid_size;
  Diffuser d;
  d.feature_size = feature_size;
  d.phase_std = phase_std;
  d.seed = seed;
  d.id = id.empty() ? "D" + std::to_string(seed) : std::move(id);
  d.phase_screen = Grid2D<double>(n, n);
  if (phase_std == 0.0) return d;

  // White Gaussian noise smoothed by a Gaussian kernel exp(-r²/s²); the
  // resulting correlation is exp(-r²/(2s²)), so s = feature/√2 gives a 1/e
  // correlation width of exactly `feature_size`.
  Rng rng(seed);
  Grid2D<Complex> noise(n, n);
  for (auto& v : noise.values()) v = rng.normal();
  fft::forward(noise);
  const double s = feature_size / std::numbers::sqrt2;
  const double df = 1.0 / (static_cast<double>(n) * cfg.object_pitch);
  for (std::size_t r = 0; r < n; ++r) {
    const double fy = static_cast<double>(fft::signed_index(r, n)) * df;
    for (std::size_t c = 0; c < n; ++c) {
      const double fx = static_cast<double>(fft::signed_index(c, n)) * df;
      noise(r, c) *= std::exp(-kPi * kPi * s * s * (fx * fx + fy * fy));
    }
  }
  fft::inverse(noise);

  // Surface height h (µm) with the rms that produces `phase_std` through the
  // glass step, then phase = 2π/λ·(n−1)·h.
  Grid2D<double> height(n, n);
  for (std::size_t i = 0; i < height.size(); ++i) height.data()[i] = noise.data()[i].real();
  const double m = mean(height.values());
  const double sd = stddev(height.values());
  const double dn = cfg.refractive_index - 1.0;
  const double h_rms = phase_std * cfg.wavelength / (2.0 * kPi * dn);
  const double k = 2.0 * kPi / cfg.wavelength * dn;
  for (std::size_t i = 0; i < height.size(); ++i) {
    const double h = (height.data()[i] - m) / sd * h_rms;
    d.phase_screen.data()[i] = k * h;
  }
  return d;
}

ComplexField image_field(const IntensityImage& object, const Diffuser& diffuser,
                         const SystemConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.grid_size;
  if (object.grid.rows() != n || object.grid.cols() != n)
    throw InvalidInputError("simulate_speckle: object grid " + std::to_string(object.grid.rows()) +
                            "x" + std::to_string(object.grid.cols()) +
                            " does not match grid_size " + std::to_string(n));
  if (std::abs(object.pitch - cfg.object_pitch) > 1e-12 * cfg.object_pitch)
    throw InvalidInputError("simulate_speckle: object pitch " + std::to_string(object.pitch) +
                            " um does not match configured pitch " +
                            std::to_string(cfg.object_pitch) + " um");
  if (diffuser.phase_screen.rows() != n || diffuser.phase_screen.cols() != n)
    throw InvalidInputError("simulate_speckle: diffuser screen does not match grid_size");

  // Amplitude SLM: window pixels pass leak + (1 - leak)·value.
  ComplexField field;
  field.pitch = cfg.object_pitch;
  field.wavelength = cfg.wavelength;
  field.grid = Grid2D<Complex>(n, n);
  const std::size_t w0 = (n - cfg.object_region) / 2;
  const std::size_t w1 = w0 + cfg.object_region;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double v = object.grid(r, c);
      if (!(v >= 0.0 && v <= 1.0))
        throw InvalidInputError("simulate_speckle: object values must lie in [0, 1]");
      const bool in_window = r >= w0 && r < w1 && c >= w0 && c < w1;
      field.grid(r, c) = in_window ? cfg.slm_leak + (1.0 - cfg.slm_leak) * v : v;
    }
  }

  field = propagate_angular_spectrum(field, cfg.defocus);
  for (std::size_t i = 0; i < field.grid.size(); ++i) {
    const double phi = diffuser.phase_screen.data()[i];
    field.grid.data()[i] *= Complex(std::cos(phi), std::sin(phi));
  }

  // Back to the front focal plane of L1 and through the iris, in one pass.
  fft::forward(field.grid);
  const double df = 1.0 / (static_cast<double>(n) * cfg.object_pitch);
  const double cutoff = cfg.numerical_aperture() / cfg.wavelength;
  const double flimit = band_limit(n, cfg.object_pitch, cfg.wavelength, cfg.defocus);
  for (std::size_t r = 0; r < n; ++r) {
    const double fy = static_cast<double>(fft::signed_index(r, n)) * df;
    for (std::size_t c = 0; c < n; ++c) {
      const double fx = static_cast<double>(fft::signed_index(c, n)) * df;
      if (fx * fx + fy * fy > cutoff * cutoff) {
        field.grid(r, c) = Complex{};
      } else {
        field.grid(r, c) *= transfer(fx, fy, cfg.wavelength, -cfg.defocus, flimit);
      }
    }
  }
  fft::inverse(field.grid);

  // Relay by L2: inverted image, amplitude scaled by 1/M so that power is
  // conserved on camera pixels of side M·pitch.
  ComplexField out = field;
  const double amp = 1.0 / cfg.magnification();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c)
      out.grid(r, c) = amp * field.grid((n - r) % n, (n - c) % n);
  return out;
}

Grid2D<double> register_to_object_frame(const Grid2D<double>& camera) {
  if (!camera.is_square() || camera.empty())
    throw InvalidInputError("register_to_object_frame: image must be square and non-empty");
  const std::size_t n = camera.rows();
  Grid2D<double> out(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) out(r, c) = camera((n - r) % n, (n - c) % n);
  return out;
}

IntensityImage simulate_speckle(const IntensityImage& object, const Diffuser& diffuser,
                                const SystemConfig& cfg) {
  const ComplexField f = image_field(object, diffuser, cfg);
  IntensityImage out;
  out.pitch = cfg.object_pitch;
  out.grid = Grid2D<double>(f.grid.rows(), f.grid.cols());
  for (std::size_t i = 0; i < f.grid.size(); ++i) out.grid.data()[i] = std::norm(f.grid.data()[i]);
  return out;
}

double measure_speckle_size(const IntensityImage& speckle) {
  const auto& g = speckle.grid;
  if (!g.is_square() || g.rows() < 16)
    throw InvalidInputError("measure_speckle_size: need a square image of side >= 16");
  if (stddev(g.values()) <= 0.0)
    throw DegenerateInputError("measure_speckle_size: speckle has zero variance");
  const Grid2D<double> ac = normalized_autocorrelation(centered_copy(g));
  const std::size_t n = g.rows();
  const auto profile = axis_profile(ac, n / 4);
  // Pedestal from lags far outside the central peak.
  double pedestal = 0.0;
  for (std::size_t k = n / 8; k < n / 4; ++k) pedestal += profile[k];
  pedestal /= static_cast<double>(n / 4 - n / 8);
  std::vector<double> p(profile.size());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = (profile[k] - pedestal) / (1.0 - pedestal);
  return 2.0 * crossing(p, 0.5) * speckle.pitch;
}

IntensityImage uniform_illumination(const SystemConfig& cfg) {
  return {Grid2D<double>(cfg.grid_size, cfg.grid_size, 1.0), cfg.object_pitch};
}

std::vector<IsoplanatismPoint> characterize_isoplanatism(const Diffuser& diffuser,
                                                         const SystemConfig& cfg,
                                                         int max_shift) {
  SystemConfig scan = cfg;
  scan.slm_leak = 0.0;
  scan.validate();
  if (max_shift < 0 || static_cast<std::size_t>(max_shift) + 2 > cfg.object_region / 2)
    throw InvalidInputError("characterize_isoplanatism: max_shift " + std::to_string(max_shift) +
                            " leaves the object window");
  const std::size_t n = cfg.grid_size;
  const std::size_t c0 = n / 2;
  auto point_speckle = [&](int shift) {
    IntensityImage obj;
    obj.pitch = cfg.object_pitch;
    obj.grid = Grid2D<double>(n, n);
    for (std::size_t r = c0 - 1; r <= c0 + 1; ++r)
      for (std::size_t c = c0 - 1; c <= c0 + 1; ++c) obj.grid(r, c + static_cast<std::size_t>(shift)) = 1.0;
    return center_crop(simulate_speckle(obj, diffuser, scan).grid, cfg.object_region);
  };
  const Grid2D<double> reference = point_speckle(0);
  std::vector<IsoplanatismPoint> curve;
  curve.reserve(static_cast<std::size_t>(max_shift) + 1);
  for (int s = 0; s <= max_shift; ++s) {
    const Grid2D<double> img = s == 0 ? reference : point_speckle(s);
    curve.push_back({s * cfg.object_pitch, pearson(reference.values(), img.values())});
  }
  return curve;
}

double border_power_fraction(const IntensityImage& image, double border_fraction) {
  const auto& g = image.grid;
  const auto w = static_cast<std::size_t>(std::lround(border_fraction * static_cast<double>(g.rows())));
  double total = 0.0, border = 0.0;
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < g.cols(); ++c) {
      const double v = g(r, c);
      total += v;
      if (r < w || c < w || r >= g.rows() - w || c >= g.cols() - w) border += v;
    }
  }
  if (total <= 0.0) throw DegenerateInputError("border_power_fraction: image has no power");
  return border / total;
}

double correlation_width(const Grid2D<double>& screen, double pitch) {
  if (!screen.is_square() || screen.rows() < 8)
    throw InvalidInputError("correlation_width: need a square grid of side >= 8");
  if (stddev(screen.values()) <= 0.0)
    throw DegenerateInputError("correlation_width: screen has zero variance");
  const Grid2D<double> ac = normalized_autocorrelation(centered_copy(screen));
  // Radially averaged profile out to n/4.
  const std::size_t m = ac.rows();
  const std::size_t max_lag = screen.rows() / 4;
  std::vector<double> sum(max_lag, 0.0);
  std::vector<double> count(max_lag, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const double dy = static_cast<double>(fft::signed_index(r, m));
    for (std::size_t c = 0; c < m; ++c) {
      const double dx = static_cast<double>(fft::signed_index(c, m));
      const auto bin = static_cast<std::size_t>(std::lround(std::hypot(dx, dy)));
      if (bin < max_lag) {
        sum[bin] += ac(r, c);
        count[bin] += 1.0;
      }
    }
  }
  std::vector<double> p(max_lag);
  for (std::size_t k = 0; k < max_lag; ++k) p[k] = sum[k] / count[k];
  return crossing(p, std::exp(-1.0)) * pitch;
}

}  // namespace specklenet::optics
