#include "specklenet/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"
#include "specklenet/error.hpp"
#include "specklenet/parallel.hpp"
#include "specklenet/pgm.hpp"
#include "specklenet/rng.hpp"
#include "specklenet/spkt.hpp"

namespace specklenet::datagen {

using json = nlohmann::json;

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<std::string_view, E>, N>& table,
             const char* what) {
  for (const auto& [name, value] : table)
    if (name == s) return value;
  throw ConfigError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

template <typename E, std::size_t N>
std::string_view enum_name(E v, const std::array<std::pair<std::string_view, E>, N>& table) {
  for (const auto& [name, value] : table)
    if (value == v) return name;
  return "?";
}

constexpr std::array<std::pair<std::string_view, ObjectClass>, 4> kClasses{{
    {"glyphs_a", ObjectClass::glyphs_a},
    {"glyphs_b", ObjectClass::glyphs_b},
    {"doodles", ObjectClass::doodles},
    {"imported", ObjectClass::imported},
}};
constexpr std::array<std::pair<std::string_view, Split>, 5> kSplits{{
    {"train", Split::train},
    {"group1", Split::group1},
    {"group2", Split::group2},
    {"group3", Split::group3},
    {"group4", Split::group4},
}};
constexpr std::array<std::pair<std::string_view, Task>, 2> kTasks{{
    {"binary", Task::binary},
    {"grayscale", Task::grayscale},
}};
constexpr std::array<std::pair<std::string_view, DiffuserRole>, 2> kRoles{{
    {"train", DiffuserRole::train},
    {"test", DiffuserRole::test},
}};

struct Point {
  double y, x;
};

void draw_segment(Grid2D<double>& img, Point a, Point b, double width) {
  const double half = 0.5 * width;
  const double dy = b.y - a.y, dx = b.x - a.x;
  const double len2 = std::max(dy * dy + dx * dx, 1e-12);
  const auto n = static_cast<long>(img.rows());
  const long r0 = std::max(0L, static_cast<long>(std::floor(std::min(a.y, b.y) - half)));
  const long r1 = std::min(n - 1, static_cast<long>(std::ceil(std::max(a.y, b.y) + half)));
  const long c0 = std::max(0L, static_cast<long>(std::floor(std::min(a.x, b.x) - half)));
  const long c1 = std::min(n - 1, static_cast<long>(std::ceil(std::max(a.x, b.x) + half)));
  for (long r = r0; r <= r1; ++r) {
    for (long c = c0; c <= c1; ++c) {
      const double t = std::clamp(((r - a.y) * dy + (c - a.x) * dx) / len2, 0.0, 1.0);
      const double ey = r - (a.y + t * dy), ex = c - (a.x + t * dx);
      if (ey * ey + ex * ex <= half * half) img(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = 1.0;
    }
  }
}

Grid2D<double> draw_glyph_a(Rng& rng, std::size_t size, double width) {
  const double n = static_cast<double>(size);
  const double m = 0.15 * n;
  Grid2D<double> img(size, size);
  const auto strokes = rng.uniform_int(2, 5);
  Point p{rng.uniform(m, n - m), rng.uniform(m, n - m)};
  for (std::int64_t i = 0; i < strokes; ++i) {
    Point q{std::clamp(p.y + rng.uniform(-0.45 * n, 0.45 * n), m, n - m),
            std::clamp(p.x + rng.uniform(-0.45 * n, 0.45 * n), m, n - m)};
    draw_segment(img, p, q, width);
    p = q;
  }
  return img;
}

Grid2D<double> draw_glyph_b(Rng& rng, std::size_t size, double width) {
  const double n = static_cast<double>(size);
  const double m = 0.15 * n;
  const double step = 0.5 * (n - 2.0 * m);
  Grid2D<double> img(size, size);
  auto vertex = [&](std::int64_t k) {
    return Point{m + step * static_cast<double>(k / 3) + rng.uniform(-0.05 * n, 0.05 * n),
                 m + step * static_cast<double>(k % 3) + rng.uniform(-0.05 * n, 0.05 * n)};
  };
  const auto strokes = rng.uniform_int(2, 5);
  std::int64_t k = rng.uniform_int(0, 8);
  Point p = vertex(k);
  for (std::int64_t i = 0; i < strokes; ++i) {
    std::int64_t next = rng.uniform_int(0, 7);
    if (next >= k) ++next;
    k = next;
    const Point q = vertex(k);
    draw_segment(img, p, q, width);
    p = q;
  }
  return img;
}

Grid2D<double> draw_doodle(Rng& rng, std::size_t size, double width) {
  const double n = static_cast<double>(size);
  Grid2D<double> img(size, size);
  const Point center{0.5 * n + rng.uniform(-0.1 * n, 0.1 * n), 0.5 * n + rng.uniform(-0.1 * n, 0.1 * n)};
  const auto v = rng.uniform_int(4, 7);
  const double rotation = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double sector = 2.0 * std::numbers::pi / static_cast<double>(v);
  std::vector<Point> pts;
  for (std::int64_t j = 0; j < v; ++j) {
    const double angle = rotation + sector * (static_cast<double>(j) + rng.uniform(-0.3, 0.3));
    const double radius = rng.uniform(0.15 * n, 0.35 * n);
    pts.push_back({center.y + radius * std::sin(angle), center.x + radius * std::cos(angle)});
  }
  for (std::size_t j = 0; j < pts.size(); ++j) draw_segment(img, pts[j], pts[(j + 1) % pts.size()], width);
  return img;
}

Grid2D<double> to_grid(const spkt::Array& a, const std::string& name) {
  if (a.dims.size() != 2) throw FormatError(name + ": expected a rank-2 tensor");
  Grid2D<double> g(a.dims[0], a.dims[1]);
  std::copy(a.data.begin(), a.data.end(), g.data());
  return g;
}

void write_grid(const std::filesystem::path& path, const Grid2D<double>& g) {
  std::vector<float> data(g.values().begin(), g.values().end());
  const std::array<std::uint32_t, 2> dims{static_cast<std::uint32_t>(g.rows()),
                                          static_cast<std::uint32_t>(g.cols())};
  spkt::write(path, dims, data);
}

Grid2D<double> resample_bilinear(const Grid2D<double>& src, std::size_t size) {
  if (src.rows() == size && src.cols() == size) return src;
  Grid2D<double> out(size, size);
  const double sy = static_cast<double>(src.rows()) / static_cast<double>(size);
  const double sx = static_cast<double>(src.cols()) / static_cast<double>(size);
  for (std::size_t r = 0; r < size; ++r) {
    const double y = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.rows() - 1));
    const auto y0 = static_cast<std::size_t>(y);
    const std::size_t y1 = std::min(y0 + 1, src.rows() - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < size; ++c) {
      const double x = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.cols() - 1));
      const auto x0 = static_cast<std::size_t>(x);
      const std::size_t x1 = std::min(x0 + 1, src.cols() - 1);
      const double fx = x - static_cast<double>(x0);
      out(r, c) = (1 - fy) * ((1 - fx) * src(y0, x0) + fx * src(y0, x1)) +
                  fy * ((1 - fx) * src(y1, x0) + fx * src(y1, x1));
    }
  }
  return out;
}

json optics_json(const optics::SystemConfig& c) {
  return {{"wavelength", c.wavelength},       {"f1", c.f1},
          {"f2", c.f2},                       {"pupil_diameter", c.pupil_diameter},
          {"object_pitch", c.object_pitch},   {"grid_size", c.grid_size},
          {"defocus", c.defocus},             {"refractive_index", c.refractive_index},
          {"object_region", c.object_region}, {"slm_leak", c.slm_leak}};
}

optics::SystemConfig optics_from(const json& j) {
  optics::SystemConfig c;
  c.wavelength = j.value("wavelength", c.wavelength);
  c.f1 = j.value("f1", c.f1);
  c.f2 = j.value("f2", c.f2);
  c.pupil_diameter = j.value("pupil_diameter", c.pupil_diameter);
  c.object_pitch = j.value("object_pitch", c.object_pitch);
  c.grid_size = j.value("grid_size", c.grid_size);
  c.defocus = j.value("defocus", c.defocus);
  c.refractive_index = j.value("refractive_index", c.refractive_index);
  c.object_region = j.value("object_region", c.object_region);
  c.slm_leak = j.value("slm_leak", c.slm_leak);
  return c;
}

json dataset_json(const DatasetConfig& c) {
  json j = {{"optics", optics_json(c.optics)},
            {"n_train_diffusers", c.n_train_diffusers},
            {"n_test_diffusers", c.n_test_diffusers},
            {"n_train_objects", c.n_train_objects},
            {"n_group2_objects", c.group2_count()},
            {"n_group3_objects", c.group3_count()},
            {"n_group4_objects", c.group4_count()},
            {"feature_size", c.feature_size},
            {"phase_std", c.phase_std},
            {"stroke_scale", c.stroke_scale},
            {"seed", c.seed},
            {"train_diffuser_seeds", c.resolved_train_seeds()},
            {"test_diffuser_seeds", c.resolved_test_seeds()},
            {"task", to_string(c.task)},
            {"import_threshold", c.import_threshold}};
  j["import_path"] = c.import_path ? json(c.import_path->string()) : json(nullptr);
  return j;
}

DatasetConfig dataset_from(const json& j) {
  DatasetConfig c;
  if (j.contains("optics")) c.optics = optics_from(j.at("optics"));
  c.n_train_diffusers = j.value("n_train_diffusers", c.n_train_diffusers);
  c.n_test_diffusers = j.value("n_test_diffusers", c.n_test_diffusers);
  c.n_train_objects = j.value("n_train_objects", c.n_train_objects);
  c.n_group2_objects = j.value("n_group2_objects", c.n_group2_objects);
  c.n_group3_objects = j.value("n_group3_objects", c.n_group3_objects);
  c.n_group4_objects = j.value("n_group4_objects", c.n_group4_objects);
  c.feature_size = j.value("feature_size", c.feature_size);
  c.phase_std = j.value("phase_std", c.phase_std);
  c.stroke_scale = j.value("stroke_scale", c.stroke_scale);
  c.seed = j.value("seed", c.seed);
  c.train_diffuser_seeds = j.value("train_diffuser_seeds", c.train_diffuser_seeds);
  c.test_diffuser_seeds = j.value("test_diffuser_seeds", c.test_diffuser_seeds);
  c.task = parse_task(j.value("task", std::string(to_string(c.task))));
  c.import_threshold = j.value("import_threshold", c.import_threshold);
  if (j.contains("import_path") && !j.at("import_path").is_null())
    c.import_path = j.at("import_path").get<std::string>();
  return c;
}

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  }
}

std::string record_name(std::uint64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(id));
  return buf;
}

std::vector<ObjectImage> alternating_glyphs(std::size_t count, std::size_t size, std::uint64_t seed,
                                            double stroke_scale) {
  std::vector<ObjectImage> a, b;
  if (count > 0) a = generate_objects(ObjectClass::glyphs_a, (count + 1) / 2, size, derive_seed(seed, "glyphs_a"), stroke_scale);
  if (count > 1) b = generate_objects(ObjectClass::glyphs_b, count / 2, size, derive_seed(seed, "glyphs_b"), stroke_scale);
  std::vector<ObjectImage> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(i % 2 == 0 ? a[i / 2] : b[i / 2]);
  return out;
}

}  // namespace

std::string_view to_string(ObjectClass c) { return enum_name(c, kClasses); }
std::string_view to_string(Split s) { return enum_name(s, kSplits); }
std::string_view to_string(Task t) { return enum_name(t, kTasks); }
std::string_view to_string(DiffuserRole r) { return enum_name(r, kRoles); }
ObjectClass parse_object_class(std::string_view s) { return parse_enum(s, kClasses, "object class"); }
Split parse_split(std::string_view s) { return parse_enum(s, kSplits, "split"); }
Task parse_task(std::string_view s) { return parse_enum(s, kTasks, "task"); }
DiffuserRole parse_role(std::string_view s) { return parse_enum(s, kRoles, "diffuser role"); }

double fill_fraction(const Grid2D<double>& g) {
  if (g.empty()) return 0.0;
  const auto nz = std::count_if(g.values().begin(), g.values().end(), [](double v) { return v != 0.0; });
  return static_cast<double>(nz) / static_cast<double>(g.size());
}

std::vector<ObjectImage> generate_objects(ObjectClass class_tag, std::size_t count, std::size_t size,
                                          std::uint64_t seed, double stroke_scale) {
  if (count < 1) throw InvalidInputError("generate_objects: count must be >= 1");
  if (size < 8) throw InvalidInputError("generate_objects: size must be >= 8");
  if (class_tag == ObjectClass::imported)
    throw InvalidInputError("generate_objects: imported objects come from import_objects");
  if (!(stroke_scale > 0.0)) throw InvalidInputError("generate_objects: stroke_scale must be positive");
  std::vector<ObjectImage> out(count);
  parallel_for(count, [&](std::size_t i) {
    Rng rng(derive_seed(seed, to_string(class_tag), i));
    Grid2D<double> img;
    do {
      const double width = rng.uniform(2.0, 3.0) * stroke_scale;
      switch (class_tag) {
        case ObjectClass::glyphs_a: img = draw_glyph_a(rng, size, width); break;
        case ObjectClass::glyphs_b: img = draw_glyph_b(rng, size, width); break;
        default: img = draw_doodle(rng, size, width); break;
      }
    } while (fill_fraction(img) > kMaxSparsity || fill_fraction(img) == 0.0);
    out[i] = {std::move(img), class_tag, i};
  });
  return out;
}

std::vector<ObjectImage> import_objects(const std::filesystem::path& path, std::size_t size,
                                        double binarize_threshold) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw FormatError(path.string() + ": no .pgm files found");
  } else {
    files.push_back(path);
  }
  std::vector<ObjectImage> out;
  out.reserve(files.size());
  for (const auto& f : files) {
    const auto raw = pgm::read(f);
    Grid2D<double> g(raw.rows(), raw.cols());
    for (std::size_t i = 0; i < raw.size(); ++i) g.data()[i] = raw.data()[i] / 255.0;
    g = resample_bilinear(g, size);
    for (auto& v : g.values()) {
      v = std::clamp(v, 0.0, 1.0);
      if (v <= binarize_threshold) v = 0.0;
    }
    out.push_back({std::move(g), ObjectClass::imported, out.size()});
  }
  return out;
}

Grid2D<double> bin2x2(const Grid2D<double>& g) {
  if (g.rows() % 2 != 0 || g.cols() % 2 != 0 || g.empty())
    throw ShapeError("bin2x2: grid must be even-sized, got " + std::to_string(g.rows()) + "x" +
                     std::to_string(g.cols()));
  Grid2D<double> out(g.rows() / 2, g.cols() / 2);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c)
      out(r, c) = 0.25 * (g(2 * r, 2 * c) + g(2 * r, 2 * c + 1) + g(2 * r + 1, 2 * c) + g(2 * r + 1, 2 * c + 1));
  return out;
}

Sample preprocess(const Grid2D<double>& speckle, const Grid2D<double>& object, Task task) {
  if (speckle.rows() != object.rows() || speckle.cols() != object.cols())
    throw ShapeError("preprocess: speckle and object grids differ in size");
  const Grid2D<double> s = bin2x2(speckle);
  const Grid2D<double> o = bin2x2(object);
  const double peak = *std::max_element(s.values().begin(), s.values().end());
  if (!(peak > 0.0)) throw DegenerateInputError("preprocess: all-zero speckle cannot be max-normalized");
  const std::size_t h = s.rows(), w = s.cols();
  Sample out{nn::Tensor<float>({1, h, w}), nn::Tensor<float>({2, h, w})};
  for (std::size_t i = 0; i < h * w; ++i) {
    out.input[i] = static_cast<float>(s.data()[i] / peak);
    const double obj = task == Task::binary ? (o.data()[i] > 0.0 ? 1.0 : 0.0) : o.data()[i];
    out.target[i] = static_cast<float>(obj);
    out.target[h * w + i] = static_cast<float>(1.0 - obj);
  }
  return out;
}

std::size_t DatasetConfig::group2_count() const {
  return n_group2_objects ? n_group2_objects : std::max<std::size_t>(1, n_train_objects / 3);
}
std::size_t DatasetConfig::group3_count() const {
  return n_group3_objects ? n_group3_objects : std::max<std::size_t>(1, n_train_objects * 4 / 15);
}
std::size_t DatasetConfig::group4_count() const {
  return n_group4_objects ? n_group4_objects : std::max<std::size_t>(1, n_train_objects * 7 / 150);
}

std::vector<std::uint64_t> DatasetConfig::resolved_train_seeds() const {
  if (!train_diffuser_seeds.empty()) return train_diffuser_seeds;
  std::vector<std::uint64_t> s;
  for (std::size_t i = 0; i < n_train_diffusers; ++i) s.push_back(derive_seed(seed, "train-diffuser", i));
  return s;
}

std::vector<std::uint64_t> DatasetConfig::resolved_test_seeds() const {
  if (!test_diffuser_seeds.empty()) return test_diffuser_seeds;
  std::vector<std::uint64_t> s;
  for (std::size_t i = 0; i < n_test_diffusers; ++i) s.push_back(derive_seed(seed, "test-diffuser", i));
  return s;
}

void DatasetConfig::validate() const {
  if (n_train_diffusers < 1) throw ConfigError("n_train_diffusers must be >= 1");
  if (n_test_diffusers < 1) throw ConfigError("n_test_diffusers must be >= 1");
  if (n_train_objects < 1) throw ConfigError("n_train_objects must be >= 1");
  if (!train_diffuser_seeds.empty() && train_diffuser_seeds.size() != n_train_diffusers)
    throw ConfigError("train_diffuser_seeds has " + std::to_string(train_diffuser_seeds.size()) +
                      " entries for " + std::to_string(n_train_diffusers) + " train diffusers");
  if (!test_diffuser_seeds.empty() && test_diffuser_seeds.size() != n_test_diffusers)
    throw ConfigError("test_diffuser_seeds has " + std::to_string(test_diffuser_seeds.size()) +
                      " entries for " + std::to_string(n_test_diffusers) + " test diffusers");
  const auto tr = resolved_train_seeds();
  const auto te = resolved_test_seeds();
  std::set<std::uint64_t> seen(tr.begin(), tr.end());
  if (seen.size() != tr.size()) throw ConfigError("duplicate train diffuser seeds");
  for (auto s : te)
    if (!seen.insert(s).second)
      throw ConfigError("diffuser seed " + std::to_string(s) + " appears in both or repeats within a pool");
  if (optics.object_region % 2 != 0) throw ConfigError("object_region must be even for 2x2 binning");
  try {
    optics.validate();
  } catch (const InvalidInputError& e) {
    throw ConfigError(e.what());
  }
}

std::string to_json_string(const DatasetConfig& cfg) { return dataset_json(cfg).dump(2); }
DatasetConfig dataset_config_from_json(std::string_view text) {
  return dataset_from(parse_json(text, "dataset config"));
}
std::string to_json_string(const optics::SystemConfig& cfg) { return optics_json(cfg).dump(2); }
optics::SystemConfig system_config_from_json(std::string_view text) {
  return optics_from(parse_json(text, "optics config"));
}

std::vector<const RecordEntry*> DatasetManifest::split(Split s) const {
  std::vector<const RecordEntry*> out;
  for (const auto& r : records)
    if (r.split == s) out.push_back(&r);
  return out;
}

std::vector<std::string> DatasetManifest::diffuser_ids(DiffuserRole role) const {
  std::vector<std::string> out;
  for (const auto& d : diffusers)
    if (d.role == role) out.push_back(d.id);
  return out;
}

DatasetManifest build_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  cfg.validate();
  const auto& oc = cfg.optics;
  const std::size_t region = oc.object_region;

  // Objects, ids assigned sequentially: train, group2, group3, group4.
  std::vector<ObjectImage> train, g2;
  if (cfg.import_path) {
    auto imported = import_objects(*cfg.import_path, region, cfg.import_threshold);
    if (imported.size() < cfg.n_train_objects + cfg.group2_count())
      throw ConfigError("import path holds " + std::to_string(imported.size()) + " images, need " +
                        std::to_string(cfg.n_train_objects + cfg.group2_count()));
    train.assign(imported.begin(), imported.begin() + static_cast<long>(cfg.n_train_objects));
    g2.assign(imported.begin() + static_cast<long>(cfg.n_train_objects),
              imported.begin() + static_cast<long>(cfg.n_train_objects + cfg.group2_count()));
  } else {
    train = alternating_glyphs(cfg.n_train_objects, region, derive_seed(cfg.seed, "objects-train"), cfg.stroke_scale);
    g2 = alternating_glyphs(cfg.group2_count(), region, derive_seed(cfg.seed, "objects-group2"), cfg.stroke_scale);
  }
  auto g3 = generate_objects(ObjectClass::doodles, cfg.group3_count(), region,
                             derive_seed(cfg.seed, "objects-group3"), cfg.stroke_scale);
  auto g4 = alternating_glyphs(cfg.group4_count(), region, derive_seed(cfg.seed, "objects-group4"), cfg.stroke_scale);

  std::vector<ObjectImage> objects;
  for (auto* set : {&train, &g2, &g3, &g4})
    for (auto& o : *set) {
      o.object_id = objects.size();
      objects.push_back(o);
    }

  DatasetManifest m;
  m.config = cfg;
  m.config.train_diffuser_seeds = cfg.resolved_train_seeds();
  m.config.test_diffuser_seeds = cfg.resolved_test_seeds();
  m.config.n_group2_objects = cfg.group2_count();
  m.config.n_group3_objects = cfg.group3_count();
  m.config.n_group4_objects = cfg.group4_count();
  m.root = out_dir;
  for (std::size_t i = 0; i < cfg.n_train_diffusers; ++i)
    m.diffusers.push_back({"train" + std::to_string(i), m.config.train_diffuser_seeds[i], DiffuserRole::train});
  for (std::size_t i = 0; i < cfg.n_test_diffusers; ++i)
    m.diffusers.push_back({"test" + std::to_string(i), m.config.test_diffuser_seeds[i], DiffuserRole::test});

  std::vector<optics::Diffuser> diffusers(m.diffusers.size());
  parallel_for(diffusers.size(), [&](std::size_t i) {
    diffusers[i] = optics::generate_diffuser(oc, cfg.feature_size, cfg.phase_std, m.diffusers[i].seed, m.diffusers[i].id);
  });

  auto object_path = [](std::uint64_t id) { return "objects/" + record_name(id) + ".spkt"; };
  auto add = [&](const std::vector<ObjectImage>& objs, std::size_t diffuser, Split split) {
    for (const auto& o : objs)
      m.records.push_back({o.object_id, o.class_tag, m.diffusers[diffuser].id, split,
                           "speckles/" + std::string(to_string(split)) + "/" + m.diffusers[diffuser].id + "_" +
                               record_name(o.object_id) + ".spkt",
                           object_path(o.object_id)});
  };
  const std::size_t n_tr = cfg.n_train_diffusers;
  for (std::size_t d = 0; d < n_tr; ++d) add(train, d, Split::train);
  for (std::size_t d = 0; d < cfg.n_test_diffusers; ++d) add(train, n_tr + d, Split::group1);
  add(g2, n_tr, Split::group2);
  for (std::size_t d = 0; d < cfg.n_test_diffusers; ++d) add(g3, n_tr + d, Split::group3);
  add(g4, 0, Split::group4);

  fs::create_directories(out_dir / "objects");
  for (auto s : kSplits) fs::create_directories(out_dir / "speckles" / s.first);

  parallel_for(objects.size(), [&](std::size_t i) {
    write_grid(out_dir / object_path(objects[i].object_id), objects[i].grid);
  });

  std::vector<std::size_t> diffuser_index(m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i)
    for (std::size_t d = 0; d < m.diffusers.size(); ++d)
      if (m.diffusers[d].id == m.records[i].diffuser_id) diffuser_index[i] = d;

  parallel_for(m.records.size(), [&](std::size_t i) {
    const auto& rec = m.records[i];
    optics::IntensityImage obj{center_embed(objects[rec.object_id].grid, oc.grid_size), oc.object_pitch};
    const auto speckle = optics::simulate_speckle(obj, diffusers[diffuser_index[i]], oc);
    write_grid(out_dir / rec.speckle_path, center_crop(optics::register_to_object_frame(speckle.grid), region));
  });

  write_manifest(m, out_dir / "manifest.json");
  return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  json j;
  j["format"] = "specklenet-dataset";
  j["version"] = 1;
  j["config"] = dataset_json(m.config);
  j["preprocess"] = {{"bin", 2}, {"normalize", "max"}, {"task", to_string(m.config.task)}};
  j["diffusers"] = json::array();
  for (const auto& d : m.diffusers)
    j["diffusers"].push_back({{"id", d.id}, {"seed", d.seed}, {"role", to_string(d.role)}});
  j["records"] = json::array();
  for (const auto& r : m.records)
    j["records"].push_back({{"object_id", r.object_id},
                            {"class", to_string(r.class_tag)},
                            {"diffuser_id", r.diffuser_id},
                            {"split", to_string(r.split)},
                            {"speckle_path", r.speckle_path},
                            {"object_path", r.object_path}});
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << j.dump(1) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const json j = parse_json(ss.str(), path.string().c_str());
  DatasetManifest m;
  try {
    m.config = dataset_from(j.at("config"));
    for (const auto& d : j.at("diffusers"))
      m.diffusers.push_back({d.at("id").get<std::string>(), d.at("seed").get<std::uint64_t>(),
                             parse_role(d.at("role").get<std::string>())});
    for (const auto& r : j.at("records"))
      m.records.push_back({r.at("object_id").get<std::uint64_t>(), parse_object_class(r.at("class").get<std::string>()),
                           r.at("diffuser_id").get<std::string>(), parse_split(r.at("split").get<std::string>()),
                           r.at("speckle_path").get<std::string>(), r.at("object_path").get<std::string>()});
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  m.root = path.parent_path();
  return m;
}

std::vector<const RecordEntry*> training_subset(const DatasetManifest& m, std::size_t k) {
  const auto ids = m.diffuser_ids(DiffuserRole::train);
  if (k < 1 || k > ids.size())
    throw ConfigError("requested " + std::to_string(k) + " training diffusers, manifest has " +
                      std::to_string(ids.size()));
  std::vector<const RecordEntry*> out;
  for (const auto& r : m.records) {
    if (r.split != Split::train) continue;
    const auto it = std::find(ids.begin(), ids.end(), r.diffuser_id);
    const auto j = static_cast<std::size_t>(it - ids.begin());
    // Training objects carry ids 0..n_train_objects-1.
    if (j < k && r.object_id % k == j) out.push_back(&r);
  }
  return out;
}

Grid2D<double> load_speckle(const DatasetManifest& m, const RecordEntry& r) {
  const auto p = m.root / r.speckle_path;
  return to_grid(spkt::read(p), p.string());
}

Grid2D<double> load_object(const DatasetManifest& m, const RecordEntry& r) {
  const auto p = m.root / r.object_path;
  return to_grid(spkt::read(p), p.string());
}

Sample load_sample(const DatasetManifest& m, const RecordEntry& r) {
  return preprocess(load_speckle(m, r), load_object(m, r), m.config.task);
}

optics::Diffuser rebuild_diffuser(const DatasetManifest& m, std::string_view id) {
  for (const auto& d : m.diffusers)
    if (d.id == id)
      return optics::generate_diffuser(m.config.optics, m.config.feature_size, m.config.phase_std, d.seed, d.id);
  throw ConfigError("manifest has no diffuser '" + std::string(id) + "'");
}

}  // namespace specklenet::datagen
