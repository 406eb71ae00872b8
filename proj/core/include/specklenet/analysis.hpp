#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "specklenet/datagen.hpp"
#include "specklenet/grid.hpp"
#include "specklenet/model/network.hpp"

namespace specklenet::analysis {

/// Pearson correlation over flattened pixels. Throws ShapeError on size
/// mismatch and DegenerateInputError on zero variance.
double pcc(std::span<const double> a, std::span<const double> b);
double pcc(const Grid2D<double>& a, const Grid2D<double>& b);

/// |a ∧ b| / |a ∨ b| for {0, 1} masks; two empty masks score 1.
/// Throws InvalidInputError on non-binary values.
double jaccard(std::span<const double> a, std::span<const double> b);
double jaccard(const Grid2D<double>& a, const Grid2D<double>& b);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------- metrics

struct MetricRow {
  std::string record_id;
  std::string diffuser_id;
  datagen::Split split = datagen::Split::train;
  datagen::ObjectClass class_tag = datagen::ObjectClass::glyphs_a;
  double ji = 0.0;
  double pcc = 0.0;
};

struct GroupStats {
  std::size_t count = 0;
  double mean_ji = 0.0, std_ji = 0.0, mean_pcc = 0.0, std_pcc = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;

  /// Aggregates keyed by split name.
  [[nodiscard]] std::map<std::string, GroupStats> by_split() const;
  /// Aggregates keyed by "split/diffuser".
  [[nodiscard]] std::map<std::string, GroupStats> by_diffuser() const;
};

GroupStats aggregate(std::span<const MetricRow* const> rows);

/// Per-record JI of the binarized prediction (binary task) and PCC between
/// the softmax object map and the ground-truth object channel.
MetricReport evaluate(const model::DenseUNet<float>& net, const datagen::DatasetManifest& manifest,
                      const std::vector<datagen::Split>& splits, std::size_t batch_size = 32);

/// Same metrics on in-memory samples.
std::vector<MetricRow> evaluate_samples(const model::DenseUNet<float>& net,
                                        const std::vector<datagen::Sample>& samples,
                                        std::size_t batch_size = 32);

// ------------------------------------------------------ decorrelation study

enum class PairCategory { same_diffuser_diff_objects, same_object_diff_diffusers, diff_both };
std::string_view to_string(PairCategory c);

inline constexpr std::size_t kHistogramBins = 50;
inline constexpr double kHistogramLo = -0.2;
inline constexpr double kHistogramHi = 1.0;

struct CorrelationStudy {
  PairCategory category = PairCategory::diff_both;
  std::vector<double> samples;
  std::array<std::size_t, kHistogramBins> histogram{};

  [[nodiscard]] double mean() const;
};

/// Histogram over [-0.2, 1] with 50 bins; out-of-range values land in the
/// edge bins so counts always sum to the sample count.
std::array<std::size_t, kHistogramBins> histogram(std::span<const double> values);

/// Speckle for (object index, diffuser index).
using SpeckleSource = std::function<Grid2D<double>(std::size_t object, std::size_t diffuser)>;

/// Training-split speckles (every train object through every train diffuser)
/// addressed by position. `source` refers to the manifest, which must outlive it.
struct SpeckleTable {
  std::vector<std::uint64_t> objects;
  std::vector<std::string> diffusers;
  SpeckleSource source;
};
/// Throws ConfigError when a train object misses a train diffuser.
SpeckleTable train_speckle_table(const datagen::DatasetManifest& manifest);

/// Samples n_pairs pairs per category from an objects × diffusers table.
std::array<CorrelationStudy, 3> decorrelation_study(const SpeckleSource& source, std::size_t n_objects,
                                                    std::size_t n_diffusers, std::size_t n_pairs,
                                                    std::uint64_t seed);
/// Uses the manifest's training split (every train object through every
/// train diffuser). Throws ConfigError with fewer than 2 objects or diffusers.
std::array<CorrelationStudy, 3> decorrelation_study(const datagen::DatasetManifest& manifest, std::size_t n_pairs,
                                                    std::uint64_t seed);

// ------------------------------------------------------- correlation maps

/// Mean-subtracted, energy-normalized circular cross-correlation
/// C(τ) = Σ a(x)·b(x+τ) / sqrt(Σa² Σb²), zero lag at (rows/2, cols/2).
Grid2D<double> cross_correlation_map(const Grid2D<double>& a, const Grid2D<double>& b);

struct CrossCorrTriple {
  double same_object = 0.0;       // PCC(center(xcorr(A·D1, A·D2)), reference)
  double different_object = 0.0;  // PCC(center(xcorr(A·D1, B·D2)), reference)
};

/// Compares same-object and different-object cross-correlation maps against
/// the autocorrelation of object A's speckle through D1 over a centered
/// `window`×`window` region.
CrossCorrTriple cross_correlation_triple(const Grid2D<double>& a_d1, const Grid2D<double>& a_d2,
                                         const Grid2D<double>& b_d2, std::size_t window = 32);

struct CrossCorrSample {
  std::size_t object_a = 0, object_b = 0, diffuser_1 = 0, diffuser_2 = 0;
  CrossCorrTriple result;
};

/// n_triples seed-derived (A, B != A, D1, D2 != D1) draws from the table.
std::vector<CrossCorrSample> cross_correlation_study(const SpeckleSource& source, std::size_t n_objects,
                                                     std::size_t n_diffusers, std::size_t n_triples,
                                                     std::uint64_t seed, std::size_t window = 32);

// ---------------------------------------------------- activation similarity

struct LayerSimilarity {
  std::size_t layer = 0;
  double mean_pcc = 0.0;
  double std_pcc = 0.0;
  std::size_t pairs = 0;
};

/// For each group (inputs of one object through different diffusers) and
/// each pair within it, the channel-averaged PCC between activation maps at
/// every tap; channels constant in either map are skipped. Inputs are
/// (1, S, S) tensors.
std::vector<LayerSimilarity> activation_similarity(const model::DenseUNet<float>& net,
                                                   const std::vector<std::vector<nn::Tensor<float>>>& groups,
                                                   const std::vector<std::size_t>& taps);

/// Network inputs grouped by object: each group holds one object's samples
/// through every diffuser of `split`, for up to `max_groups` objects.
std::vector<std::vector<nn::Tensor<float>>> activation_groups(const datagen::DatasetManifest& manifest,
                                                              datagen::Split split, std::size_t max_groups);

// ------------------------------------------------------------------ output

inline constexpr std::uint8_t kTruePositive = 255;
inline constexpr std::uint8_t kFalsePositive = 170;
inline constexpr std::uint8_t kFalseNegative = 85;

/// Gray-level overlay of a predicted mask against the truth mask.
Grid2D<std::uint8_t> overlay(const Grid2D<double>& prediction, const Grid2D<double>& truth);

void write_metrics_csv(const MetricReport& report, const std::filesystem::path& path);
MetricReport read_metrics_csv(const std::filesystem::path& path);
/// {"splits": {...}, "diffusers": {...}} with count/mean/std per group.
void write_metrics_json(const MetricReport& report, const std::filesystem::path& path);
void write_decorrelation_csv(const std::array<CorrelationStudy, 3>& studies, const std::filesystem::path& path);
void write_histogram_csv(const std::array<CorrelationStudy, 3>& studies, const std::filesystem::path& path);
void write_crosscorr_csv(const std::vector<CrossCorrSample>& samples, const std::filesystem::path& path);
void write_activation_csv(const std::vector<LayerSimilarity>& curve, const std::filesystem::path& path);
/// Min-max stretched 8-bit PGM of a real map.
void write_map_pgm(const Grid2D<double>& map, const std::filesystem::path& path);

}  // namespace specklenet::analysis
