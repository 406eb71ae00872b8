#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "specklenet/grid.hpp"
#include "specklenet/nn/tensor.hpp"
#include "specklenet/optics.hpp"

namespace specklenet::datagen {

enum class ObjectClass { glyphs_a, glyphs_b, doodles, imported };
enum class Split { train, group1, group2, group3, group4 };
enum class Task { binary, grayscale };
enum class DiffuserRole { train, test };

std::string_view to_string(ObjectClass c);
std::string_view to_string(Split s);
std::string_view to_string(Task t);
std::string_view to_string(DiffuserRole r);
ObjectClass parse_object_class(std::string_view s);
Split parse_split(std::string_view s);
Task parse_task(std::string_view s);
DiffuserRole parse_role(std::string_view s);

inline constexpr double kMaxSparsity = 0.35;

struct ObjectImage {
  Grid2D<double> grid;  // values in [0, 1]
  ObjectClass class_tag = ObjectClass::glyphs_a;
  std::uint64_t object_id = 0;
};

/// Fraction of nonzero pixels.
double fill_fraction(const Grid2D<double>& g);

/// Procedural sparse objects on a size×size grid. glyphs_a are random-walk
/// polylines with short free-angle strokes; glyphs_b are polylines whose
/// vertices snap to a 3×3 lattice (long straight strokes); doodles are closed
/// star-shaped loops around the center. Strokes are 2–3 px wide times
/// `stroke_scale` (2 by default, i.e. 2–3 px after the 2×2 binning).
/// Ids are 0..count-1.
std::vector<ObjectImage> generate_objects(ObjectClass class_tag, std::size_t count,
                                          std::size_t size, std::uint64_t seed,
                                          double stroke_scale = 2.0);

/// Reads 8-bit PGM files (a single file, or every *.pgm in a directory in
/// name order), resamples bilinearly to size×size and maps 0..255 to [0, 1].
/// Values at or below `binarize_threshold` are zeroed.
std::vector<ObjectImage> import_objects(const std::filesystem::path& path, std::size_t size,
                                        double binarize_threshold = 0.0);

/// 2×2 mean binning of an even-sized grid.
Grid2D<double> bin2x2(const Grid2D<double>& g);

struct Sample {
  nn::Tensor<float> input;   // (1, h/2, w/2), speckle binned and divided by its max
  nn::Tensor<float> target;  // (2, h/2, w/2), object and background channels
};

Sample preprocess(const Grid2D<double>& speckle, const Grid2D<double>& object, Task task);

struct DatasetConfig {
  optics::SystemConfig optics;
  std::size_t n_train_diffusers = 4;
  std::size_t n_test_diffusers = 5;
  std::size_t n_train_objects = 150;
  /// 0 derives the default proportions from n_train_objects.
  std::size_t n_group2_objects = 0;
  std::size_t n_group3_objects = 0;
  std::size_t n_group4_objects = 0;
  double feature_size = 63.0;
  double phase_std = 6.283185307179586;
  double stroke_scale = 2.0;
  std::uint64_t seed = 7;
  /// Explicit diffuser seeds; empty means derive from `seed`.
  std::vector<std::uint64_t> train_diffuser_seeds;
  std::vector<std::uint64_t> test_diffuser_seeds;
  Task task = Task::binary;
  /// When set, training and group2 objects come from these PGMs instead of
  /// the procedural glyphs.
  std::optional<std::filesystem::path> import_path;
  double import_threshold = 0.0;

  [[nodiscard]] std::size_t group2_count() const;
  [[nodiscard]] std::size_t group3_count() const;
  [[nodiscard]] std::size_t group4_count() const;
  [[nodiscard]] std::vector<std::uint64_t> resolved_train_seeds() const;
  [[nodiscard]] std::vector<std::uint64_t> resolved_test_seeds() const;
  /// Throws ConfigError on counts < 1 or overlapping seed pools.
  void validate() const;
};

std::string to_json_string(const DatasetConfig& cfg);
DatasetConfig dataset_config_from_json(std::string_view json);
std::string to_json_string(const optics::SystemConfig& cfg);
optics::SystemConfig system_config_from_json(std::string_view json);

struct DiffuserEntry {
  std::string id;
  std::uint64_t seed = 0;
  DiffuserRole role = DiffuserRole::train;
};

struct RecordEntry {
  std::uint64_t object_id = 0;
  ObjectClass class_tag = ObjectClass::glyphs_a;
  std::string diffuser_id;
  Split split = Split::train;
  std::string speckle_path;  // relative to the manifest directory
  std::string object_path;
};

struct DatasetManifest {
  DatasetConfig config;
  std::vector<DiffuserEntry> diffusers;
  std::vector<RecordEntry> records;
  /// Directory holding manifest.json; record paths resolve against it.
  std::filesystem::path root;

  [[nodiscard]] std::vector<const RecordEntry*> split(Split s) const;
  [[nodiscard]] std::vector<std::string> diffuser_ids(DiffuserRole role) const;
};

/// Simulates every record, writes object and speckle SPKT files plus
/// manifest.json under `out_dir`. Speckles are the camera window
/// (object_region²) registered to the object frame; preprocessing happens at
/// load time. Output is
/// byte-identical for identical configs regardless of thread count.
DatasetManifest build_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir);

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Training records for a k-diffuser run with matched total size: train
/// diffuser j (j < k) contributes the objects whose index i satisfies
/// i mod k == j, so every training object is used exactly once.
std::vector<const RecordEntry*> training_subset(const DatasetManifest& m, std::size_t k);

/// Raw object and speckle grids of a record.
Grid2D<double> load_speckle(const DatasetManifest& m, const RecordEntry& r);
Grid2D<double> load_object(const DatasetManifest& m, const RecordEntry& r);
Sample load_sample(const DatasetManifest& m, const RecordEntry& r);

/// Regenerates the diffuser named `id` from the manifest.
optics::Diffuser rebuild_diffuser(const DatasetManifest& m, std::string_view id);

}  // namespace specklenet::datagen
