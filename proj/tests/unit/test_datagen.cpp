#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "doctest.h"
#include "specklenet/datagen.hpp"
#include "specklenet/error.hpp"
#include "specklenet/pgm.hpp"

using namespace specklenet;
using namespace specklenet::datagen;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "specklenet-unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

DatasetConfig tiny_config() {
  DatasetConfig c;
  c.optics.grid_size = 64;
  c.optics.object_region = 32;
  c.optics.defocus = 2000;
  c.n_train_diffusers = 2;
  c.n_test_diffusers = 2;
  c.n_train_objects = 12;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("datagen") {
  TEST_CASE("procedural objects are binary, sparse and reproducible") {
    for (auto cls : {ObjectClass::glyphs_a, ObjectClass::glyphs_b, ObjectClass::doodles}) {
      const auto objs = generate_objects(cls, 20, 64, 3);
      REQUIRE(objs.size() == 20);
      for (std::size_t i = 0; i < objs.size(); ++i) {
        const auto& o = objs[i];
        CHECK(o.class_tag == cls);
        CHECK(o.object_id == i);
        const double fill = fill_fraction(o.grid);
        CHECK(fill > 0.0);
        CHECK(fill <= kMaxSparsity);
        CHECK(std::all_of(o.grid.values().begin(), o.grid.values().end(), [](double v) { return v == 0.0 || v == 1.0; }));
      }
      const auto again = generate_objects(cls, 20, 64, 3);
      for (std::size_t i = 0; i < objs.size(); ++i) CHECK(objs[i].grid == again[i].grid);
      CHECK(generate_objects(cls, 1, 64, 4)[0].grid != objs[0].grid);
    }
    CHECK_THROWS_AS(generate_objects(ObjectClass::glyphs_a, 0, 64, 1), InvalidInputError);
    CHECK_THROWS_AS(generate_objects(ObjectClass::imported, 1, 64, 1), InvalidInputError);
  }

  TEST_CASE("thicker strokes fill more") {
    const auto thin = generate_objects(ObjectClass::glyphs_a, 30, 64, 5, 1.0);
    const auto thick = generate_objects(ObjectClass::glyphs_a, 30, 64, 5, 2.0);
    double a = 0, b = 0;
    for (std::size_t i = 0; i < 30; ++i) {
      a += fill_fraction(thin[i].grid);
      b += fill_fraction(thick[i].grid);
    }
    CHECK(b > 1.3 * a);
  }

  TEST_CASE("2x2 binning by hand") {
    Grid2D<double> g(2, 4);
    const double v[] = {1, 2, 3, 4, 5, 6, 7, 8};
    std::copy(std::begin(v), std::end(v), g.data());
    const auto b = bin2x2(g);
    REQUIRE(b.rows() == 1);
    REQUIRE(b.cols() == 2);
    CHECK(b(0, 0) == doctest::Approx(3.5));
    CHECK(b(0, 1) == doctest::Approx(5.5));
    CHECK_THROWS_AS(bin2x2(Grid2D<double>(3, 4)), ShapeError);
  }

  TEST_CASE("preprocess normalizes input and builds two-channel targets") {
    Grid2D<double> s(4, 4), o(4, 4);
    for (std::size_t i = 0; i < 16; ++i) s.data()[i] = static_cast<double>(i);
    o(0, 0) = 1.0;  // one of four pixels in the first bin
    o(2, 2) = 0.5;
    o(2, 3) = 0.5;
    const auto bin = preprocess(s, o, Task::binary);
    CHECK(bin.input.dims() == std::vector<std::size_t>{1, 2, 2});
    CHECK(*std::max_element(bin.input.values().begin(), bin.input.values().end()) == 1.0f);
    CHECK(bin.input[0] == doctest::Approx(2.5 / 12.5));
    CHECK(bin.target[0] == 1.0f);
    CHECK(bin.target[1] == 0.0f);
    CHECK(bin.target[3] == 1.0f);
    for (std::size_t i = 0; i < 4; ++i) CHECK(bin.target[i] + bin.target[4 + i] == 1.0f);
    const auto gray = preprocess(s, o, Task::grayscale);
    CHECK(gray.target[0] == doctest::Approx(0.25));
    CHECK(gray.target[3] == doctest::Approx(0.25));
    CHECK(gray.target[4] == doctest::Approx(0.75));
    CHECK_THROWS_AS(preprocess(Grid2D<double>(4, 4), o, Task::binary), DegenerateInputError);
    CHECK_THROWS_AS(preprocess(Grid2D<double>(6, 6, 1.0), o, Task::binary), ShapeError);
  }

  TEST_CASE("group sizes derive from the training count") {
    DatasetConfig c;
    CHECK(c.group2_count() == 50);
    CHECK(c.group3_count() == 40);
    CHECK(c.group4_count() == 7);
    c.n_group3_objects = 5;
    CHECK(c.group3_count() == 5);
  }

  TEST_CASE("config validation") {
    auto c = tiny_config();
    CHECK_NOTHROW(c.validate());
    auto bad = c;
    bad.n_train_diffusers = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.train_diffuser_seeds = {1, 2};
    bad.test_diffuser_seeds = {2, 3};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.train_diffuser_seeds = {1};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.optics.grid_size = 100;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    const auto tr = c.resolved_train_seeds();
    const auto te = c.resolved_test_seeds();
    std::set<std::uint64_t> all(tr.begin(), tr.end());
    all.insert(te.begin(), te.end());
    CHECK(all.size() == tr.size() + te.size());
  }

  TEST_CASE("config JSON round trip") {
    auto c = tiny_config();
    c.task = Task::grayscale;
    c.phase_std = 1.2345678901234567;
    c.test_diffuser_seeds = {99, 100};
    const auto back = dataset_config_from_json(to_json_string(c));
    CHECK(back.optics.grid_size == 64);
    CHECK(back.phase_std == c.phase_std);
    CHECK(back.task == Task::grayscale);
    CHECK(back.test_diffuser_seeds == c.test_diffuser_seeds);
    CHECK(to_json_string(back) == to_json_string(c));
    CHECK_THROWS_AS(dataset_config_from_json("{not json"), FormatError);
  }

  TEST_CASE("enum names round trip") {
    for (auto s : {Split::train, Split::group1, Split::group2, Split::group3, Split::group4})
      CHECK(parse_split(to_string(s)) == s);
    CHECK(parse_task("grayscale") == Task::grayscale);
    CHECK(parse_object_class("doodles") == ObjectClass::doodles);
    CHECK_THROWS_AS(parse_split("group9"), ConfigError);
  }

  TEST_CASE("dataset layout and manifest invariants") {
    const auto dir = fresh_dir("ds");
    const auto cfg = tiny_config();
    const auto m = build_dataset(cfg, dir);
    CHECK(m.split(Split::train).size() == 24);
    CHECK(m.split(Split::group1).size() == 24);
    CHECK(m.split(Split::group2).size() == 4);
    CHECK(m.split(Split::group3).size() == 2 * 3);
    CHECK(m.split(Split::group4).size() == 1);
    CHECK(m.diffuser_ids(DiffuserRole::train) == std::vector<std::string>{"train0", "train1"});
    CHECK(m.diffuser_ids(DiffuserRole::test) == std::vector<std::string>{"test0", "test1"});

    std::set<std::uint64_t> train_ids, g2_ids;
    for (const auto& r : m.records) {
      CHECK(fs::exists(dir / r.speckle_path));
      CHECK(fs::exists(dir / r.object_path));
      if (r.split == Split::train || r.split == Split::group1) {
        CHECK(r.object_id < 12);
        train_ids.insert(r.object_id);
      }
      if (r.split == Split::train) CHECK(r.diffuser_id.rfind("train", 0) == 0);
      if (r.split == Split::group1 || r.split == Split::group3) CHECK(r.diffuser_id.rfind("test", 0) == 0);
      if (r.split == Split::group2) {
        CHECK(r.diffuser_id == "test0");
        CHECK(r.object_id >= 12);
        g2_ids.insert(r.object_id);
      }
      if (r.split == Split::group3) CHECK(r.class_tag == ObjectClass::doodles);
      if (r.split == Split::group4) CHECK(r.diffuser_id == "train0");
    }
    CHECK(train_ids.size() == 12);
    CHECK(g2_ids.size() == 4);

    const auto back = read_manifest(dir / "manifest.json");
    CHECK(back.records.size() == m.records.size());
    CHECK(to_json_string(back.config) == to_json_string(m.config));
    CHECK(rebuild_diffuser(back, "train1").phase_screen ==
          optics::generate_diffuser(cfg.optics, cfg.feature_size, cfg.phase_std, m.diffusers[1].seed).phase_screen);
    CHECK_THROWS_AS(rebuild_diffuser(back, "nope"), ConfigError);

    const auto s = load_sample(back, *back.split(Split::train).front());
    CHECK(s.input.dims() == std::vector<std::size_t>{1, 16, 16});
    CHECK(s.target.dims() == std::vector<std::size_t>{2, 16, 16});
    CHECK(load_speckle(back, back.records[0]).rows() == 32);
  }

  TEST_CASE("regeneration is byte-identical") {
    const auto a = fresh_dir("regen-a");
    const auto b = fresh_dir("regen-b");
    const auto cfg = tiny_config();
    build_dataset(cfg, a);
    build_dataset(dataset_config_from_json(to_json_string(cfg)), b);
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
      if (!e.is_regular_file()) continue;
      const auto rel = fs::relative(e.path(), a);
      REQUIRE(fs::exists(b / rel));
      CHECK(slurp(e.path()) == slurp(b / rel));
      ++files;
    }
    CHECK(files > 50);
  }

  TEST_CASE("matched-total-size training subsets") {
    const auto dir = fresh_dir("subset");
    auto cfg = tiny_config();
    cfg.n_train_diffusers = 4;
    const auto m = build_dataset(cfg, dir);
    for (std::size_t k : {1u, 2u, 4u}) {
      const auto sub = training_subset(m, k);
      CHECK(sub.size() == 12);
      std::set<std::uint64_t> objects;
      std::map<std::string, int> per_diffuser;
      for (const auto* r : sub) {
        objects.insert(r->object_id);
        ++per_diffuser[r->diffuser_id];
      }
      CHECK(objects.size() == 12);
      CHECK(per_diffuser.size() == k);
      for (const auto& [id, n] : per_diffuser) CHECK(n == static_cast<int>(12 / k));
    }
    CHECK_THROWS_AS(training_subset(m, 5), ConfigError);
  }

  TEST_CASE("image import") {
    const auto dir = fresh_dir("import");
    Grid2D<std::uint8_t> img(8, 8);
    img(2, 2) = 255;
    img(5, 5) = 20;
    pgm::write(dir / "a.pgm", img);
    pgm::write(dir / "b.pgm", Grid2D<std::uint8_t>(4, 4, 255));
    const auto objs = import_objects(dir, 16, 0.1);
    REQUIRE(objs.size() == 2);
    CHECK(objs[0].class_tag == ObjectClass::imported);
    CHECK(objs[0].grid.rows() == 16);
    CHECK(std::all_of(objs[1].grid.values().begin(), objs[1].grid.values().end(),
                      [](double v) { return v == doctest::Approx(1.0); }));
    const double peak = *std::max_element(objs[0].grid.values().begin(), objs[0].grid.values().end());
    CHECK(peak > 0.5);
    for (double v : objs[0].grid.values()) CHECK((v == 0.0 || v > 0.1));
    CHECK_THROWS_AS(import_objects(fresh_dir("empty"), 16), FormatError);
  }
}
