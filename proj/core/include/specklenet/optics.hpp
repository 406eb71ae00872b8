#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "specklenet/grid.hpp"

namespace specklenet::optics {

using Complex = std::complex<double>;

/// Coherent 4F imaging system with a thin diffuser between object and L1.
/// All lengths are in micrometres.
struct SystemConfig {
  double wavelength = 0.632;
  double f1 = 200000.0;
  double f2 = 125000.0;
  double pupil_diameter = 9000.0;
  double object_pitch = 8.0;
  std::size_t grid_size = 256;
  /// Object-to-diffuser distance.
  double defocus = 30000.0;
  double refractive_index = 1.52;
  /// Side of the SLM/camera window centered on the grid, in samples.
  std::size_t object_region = 128;
  /// Amplitude passed by "off" SLM pixels inside the window (finite
  /// polarizer extinction). 0 models a perfect amplitude modulator.
  double slm_leak = 0.25;

  [[nodiscard]] double numerical_aperture() const { return pupil_diameter / (2.0 * f1); }
  [[nodiscard]] double magnification() const { return f2 / f1; }
  /// Diffraction-limited speckle size on the object side, lambda / (2 NA).
  [[nodiscard]] double speckle_size() const { return wavelength / (2.0 * numerical_aperture()); }
  [[nodiscard]] double grid_extent() const { return static_cast<double>(grid_size) * object_pitch; }

  /// Throws InvalidInputError when any invariant is violated.
  void validate() const;
};

struct ComplexField {
  Grid2D<Complex> grid;
  double pitch = 1.0;
  double wavelength = 0.632;

  [[nodiscard]] double power() const;
};

struct IntensityImage {
  Grid2D<double> grid;
  double pitch = 1.0;
};

struct Diffuser {
  Grid2D<double> phase_screen;  // radians
  double feature_size = 63.0;   // 1/e correlation length of the surface, µm
  double phase_std = 0.0;       // radians
  std::uint64_t seed = 0;
  std::string id;
};

/// Scalar angular-spectrum propagation with the transfer-function kernel.
/// Evanescent components and frequencies the kernel cannot sample without
/// aliasing (band-limited angular spectrum) are zeroed. Distance may be
/// zero or negative.
ComplexField propagate_angular_spectrum(const ComplexField& field, double distance);

/// True when the transfer function is sampled without aliasing over the full
/// band (|z| <= N·pitch²/lambda). Outside this range the band limit kicks in.
bool transfer_function_sampled(const ComplexField& field, double distance);

/// Thin lens: multiplies by exp(-i·pi·(x²+y²)/(lambda·f)), grid-centered.
ComplexField apply_lens(const ComplexField& field, double focal_length);

/// Circular aperture of the given physical diameter centered on the grid.
/// Diameters below one pitch block everything.
ComplexField apply_pupil(const ComplexField& field, double diameter);

/// Ground-glass phase screen: Gaussian random height with Gaussian
/// correlation of 1/e width `feature_size`, scaled to the requested phase
/// standard deviation. Bit-identical for identical arguments.
Diffuser generate_diffuser(const SystemConfig& cfg, double feature_size, double phase_std,
                           std::uint64_t seed, std::string id = {});

/// Coherent field at the camera, resampled onto the object-side grid
/// (camera pixel = magnification × object pitch, so the image keeps the
/// object pitch and appears inverted).
///
/// The 4F stages (propagate to L1, lens, propagate to pupil, iris, relay
/// through L2) are evaluated in closed form: L1 Fourier-transforms the
/// front-focal-plane field onto the pupil, so the chain is the diffuser
/// field propagated back to the object plane, low-passed by the iris
/// (cutoff NA/lambda), inverted and scaled by the magnification.
ComplexField image_field(const IntensityImage& object, const Diffuser& diffuser,
                         const SystemConfig& cfg);

/// |image_field|². `object` must be grid_size × grid_size with values in [0, 1].
IntensityImage simulate_speckle(const IntensityImage& object, const Diffuser& diffuser,
                                const SystemConfig& cfg);

/// Maps a camera image back onto the object frame by undoing the relay's
/// inversion, out(r, c) = in((N - r) % N, (N - c) % N). Square grids only;
/// the map is its own inverse.
Grid2D<double> register_to_object_frame(const Grid2D<double>& camera);

/// FWHM (µm) of the central peak of the normalized, background-subtracted
/// intensity autocorrelation. Throws DegenerateInputError on zero variance.
double measure_speckle_size(const IntensityImage& speckle);

/// Object lit uniformly over the whole grid. Its speckle is stationary, with
/// no window envelope, which makes it the target for speckle-size measurement.
IntensityImage uniform_illumination(const SystemConfig& cfg);

struct IsoplanatismPoint {
  double shift_um;
  double pcc;
};

/// Scans a 3×3-sample point object across 0..max_shift samples along x and
/// correlates each speckle (camera window) against the unshifted one. The
/// scan models ideal SLM extinction: a 9-sample point cannot be resolved
/// against a window-wide leak field.
std::vector<IsoplanatismPoint> characterize_isoplanatism(const Diffuser& diffuser,
                                                         const SystemConfig& cfg,
                                                         int max_shift);

/// Fraction of the image power that falls in the outer `border_fraction`
/// ring of the grid (on each side). Used to check wraparound.
double border_power_fraction(const IntensityImage& image, double border_fraction);

/// 1/e width (µm) of the normalized autocorrelation of a real screen, from
/// the radially averaged profile. Exposed for diffuser statistics checks.
double correlation_width(const Grid2D<double>& screen, double pitch);

}  // namespace specklenet::optics
