#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "specklenet/analysis.hpp"
#include "specklenet/error.hpp"
#include "specklenet/rng.hpp"

using namespace specklenet;
using namespace specklenet::analysis;
namespace fs = std::filesystem;

namespace {

// Textbook two-pass Pearson in long double.
double brute_pcc(const std::vector<double>& a, const std::vector<double>& b) {
  long double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= a.size();
  mb /= b.size();
  long double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return static_cast<double>(sab / std::sqrt(saa * sbb));
}

double brute_jaccard(const std::vector<double>& a, const std::vector<double>& b) {
  int inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] == 1.0 && b[i] == 1.0);
    uni += (a[i] == 1.0 || b[i] == 1.0);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

Grid2D<double> noise(std::size_t n, std::uint64_t seed) {
  Grid2D<double> g(n, n);
  Rng r(seed);
  for (auto& v : g.values()) v = r.normal();
  return g;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("specklenet_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("JI and PCC agree with brute force on random 8x8 inputs") {
    Rng r(42);
    double worst_pcc = 0, worst_ji = 0;
    for (int t = 0; t < 1000; ++t) {
      std::vector<double> a(64), b(64), ma(64), mb(64);
      const double density = r.uniform(0.05, 0.95);
      for (std::size_t i = 0; i < 64; ++i) {
        a[i] = r.uniform();
        b[i] = 0.5 * a[i] + r.uniform();
        ma[i] = r.uniform() < density ? 1.0 : 0.0;
        mb[i] = r.uniform() < density ? 1.0 : 0.0;
      }
      worst_pcc = std::max(worst_pcc, std::abs(pcc(a, b) - brute_pcc(a, b)));
      worst_ji = std::max(worst_ji, std::abs(jaccard(ma, mb) - brute_jaccard(ma, mb)));
    }
    CHECK(worst_pcc < 1e-9);
    CHECK(worst_ji < 1e-9);
  }

  TEST_CASE("metric edge cases") {
    const std::vector<double> z(4, 0.0), ones(4, 1.0), half{0, 1, 0.5, 1};
    CHECK(jaccard(z, z) == 1.0);
    CHECK(jaccard(z, ones) == 0.0);
    CHECK_THROWS_AS(jaccard(half, ones), InvalidInputError);
    CHECK_THROWS_AS(pcc(ones, half), DegenerateInputError);
    CHECK_THROWS_AS(pcc(std::vector<double>{1, 2}, half), ShapeError);
    CHECK(pcc(half, half) == doctest::Approx(1.0));
    std::vector<double> neg(half);
    for (auto& v : neg) v = 3 - 2 * v;
    CHECK(pcc(half, neg) == doctest::Approx(-1.0));
  }

  TEST_CASE("spearman with ties") {
    const std::vector<double> a{1, 2, 2, 3}, b{1, 2, 3, 4};
    CHECK(spearman(a, b) == doctest::Approx(4.5 / std::sqrt(22.5)));
    const std::vector<double> c{1, 4, 9, 100}, d{-1, 0, 5, 6};
    CHECK(spearman(c, d) == doctest::Approx(1.0));
  }

  TEST_CASE("aggregates and CSV/JSON output") {
    TempDir tmp("metrics");
    MetricReport rep;
    rep.rows = {{"train/train0/1", "train0", datagen::Split::train, datagen::ObjectClass::glyphs_a, 0.5, 0.25},
                {"group1/test0/1", "test0", datagen::Split::group1, datagen::ObjectClass::glyphs_a, 0.1, 1.0 / 3.0},
                {"group1/test1/1", "test1", datagen::Split::group1, datagen::ObjectClass::glyphs_b, 0.3, -0.2}};
    const auto splits = rep.by_split();
    CHECK(splits.at("group1").count == 2);
    CHECK(splits.at("group1").mean_ji == doctest::Approx(0.2));
    CHECK(splits.at("group1").std_ji == doctest::Approx(0.1));
    CHECK(rep.by_diffuser().count("group1/test1") == 1);
    write_metrics_csv(rep, tmp.path / "m.csv");
    const auto back = read_metrics_csv(tmp.path / "m.csv");
    REQUIRE(back.rows.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(back.rows[i].record_id == rep.rows[i].record_id);
      CHECK(back.rows[i].ji == rep.rows[i].ji);
      CHECK(back.rows[i].pcc == rep.rows[i].pcc);
      CHECK(back.rows[i].class_tag == rep.rows[i].class_tag);
    }
    write_metrics_json(rep, tmp.path / "m.json");
    std::ifstream jf(tmp.path / "m.json");
    const auto j = nlohmann::json::parse(jf);
    CHECK(j["splits"]["group1"]["mean_ji"].get<double>() == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(j["diffusers"].size() == 3);
    std::ofstream(tmp.path / "bad.csv") << "a,b\n";
    CHECK_THROWS_AS(read_metrics_csv(tmp.path / "bad.csv"), FormatError);
    CHECK_THROWS_AS(read_metrics_csv(tmp.path / "missing.csv"), IoError);
  }

  TEST_CASE("overlay levels") {
    Grid2D<double> p(1, 4), t(1, 4);
    p(0, 0) = 1, t(0, 0) = 1;
    p(0, 1) = 1;
    t(0, 2) = 1;
    const auto o = overlay(p, t);
    CHECK(o(0, 0) == kTruePositive);
    CHECK(o(0, 1) == kFalsePositive);
    CHECK(o(0, 2) == kFalseNegative);
    CHECK(o(0, 3) == 0);
  }

  TEST_CASE("evaluation of in-memory samples") {
    model::ArchSpec a;
    a.input_size = 8;
    a.encoder_blocks = a.decoder_blocks = 1;
    a.layers_per_block = 1;
    a.growth = 2;
    a.stem_channels = 2;
    model::DenseUNet<float> net(a, model::Task::binary, 1);
    std::vector<datagen::Sample> samples;
    Rng r(2);
    for (int k = 0; k < 5; ++k) {
      datagen::Sample s{nn::Tensor<float>({1, 8, 8}), nn::Tensor<float>({2, 8, 8})};
      for (std::size_t i = 0; i < 64; ++i) {
        s.input[i] = static_cast<float>(r.uniform());
        s.target[i] = r.uniform() < 0.3 ? 1.0f : 0.0f;
        s.target[64 + i] = 1.0f - s.target[i];
      }
      samples.push_back(std::move(s));
    }
    const auto rows = evaluate_samples(net, samples, 2);
    REQUIRE(rows.size() == 5);
    for (std::size_t k = 0; k < 5; ++k) {
      nn::Tensor<float> x(1, 1, 8, 8);
      std::copy(samples[k].input.values().begin(), samples[k].input.values().end(), x.data());
      const auto pred = model::predict(net, x);
      std::vector<double> m(64), t(64);
      for (std::size_t i = 0; i < 64; ++i) m[i] = pred.object[i], t[i] = samples[k].target[i];
      CHECK(rows[k].ji == doctest::Approx(brute_jaccard(m, t)));
    }
  }
}

TEST_SUITE("correlation") {
  TEST_CASE("histogram bins and clamping") {
    const std::vector<double> v{-5.0, -0.2, 0.0, 0.999, 1.0, 7.0};
    const auto h = histogram(v);
    std::size_t total = 0;
    for (auto c : h) total += c;
    CHECK(total == v.size());
    CHECK(h[0] == 2);
    CHECK(h[8] == 1);
    CHECK(h[kHistogramBins - 1] == 3);
  }

  TEST_CASE("cross-correlation map matches the direct circular sum") {
    const auto a = noise(8, 1), b = noise(8, 2);
    const auto m = cross_correlation_map(a, b);
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < 64; ++i) ma += a.values()[i] / 64, mb += b.values()[i] / 64;
    double ea = 0, eb = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      ea += (a.values()[i] - ma) * (a.values()[i] - ma);
      eb += (b.values()[i] - mb) * (b.values()[i] - mb);
    }
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 8; ++c) {
        const std::size_t dy = (r + 8 - 4) % 8, dx = (c + 8 - 4) % 8;
        double s = 0;
        for (std::size_t y = 0; y < 8; ++y)
          for (std::size_t x = 0; x < 8; ++x) s += (a(y, x) - ma) * (b((y + dy) % 8, (x + dx) % 8) - mb);
        CHECK(m(r, c) == doctest::Approx(s / std::sqrt(ea * eb)).epsilon(1e-10));
      }
    CHECK(cross_correlation_map(a, a)(4, 4) == doctest::Approx(1.0));
  }

  TEST_CASE("cross-correlation triple") {
    const auto a1 = noise(64, 3), b2 = noise(64, 4);
    const auto t = cross_correlation_triple(a1, a1, b2, 32);
    CHECK(t.same_object == doctest::Approx(1.0));
    CHECK(t.different_object < 0.5);
    CHECK_THROWS(cross_correlation_triple(a1, a1, b2, 128));
  }

  TEST_CASE("decorrelation and cross-correlation studies on a synthetic table") {
    // Diffuser term dominates the object term, so pairs sharing a diffuser correlate most.
    SpeckleSource src = [](std::size_t o, std::size_t d) {
      const auto dn = noise(16, 100 + d), on = noise(16, 200 + o), un = noise(16, 1000 + 10 * o + d);
      Grid2D<double> g(16, 16);
      for (std::size_t i = 0; i < g.size(); ++i)
        g.values()[i] = 0.8 * dn.values()[i] + 0.5 * on.values()[i] + 0.3 * un.values()[i];
      return g;
    };
    const auto s = decorrelation_study(src, 6, 4, 50, 9);
    CHECK(s[0].category == PairCategory::same_diffuser_diff_objects);
    for (const auto& c : s) {
      CHECK(c.samples.size() == 50);
      std::size_t total = 0;
      for (auto h : c.histogram) total += h;
      CHECK(total == 50);
    }
    CHECK(s[0].mean() > s[1].mean() + 0.2);
    CHECK(s[1].mean() > s[2].mean() + 0.1);
    const auto again = decorrelation_study(src, 6, 4, 50, 9);
    CHECK(again[2].samples == s[2].samples);
    CHECK(to_string(PairCategory::diff_both) == "diff_both");
    CHECK_THROWS_AS(decorrelation_study(src, 1, 4, 5, 9), ConfigError);

    const auto cc = cross_correlation_study(src, 6, 4, 10, 11, 8);
    REQUIRE(cc.size() == 10);
    for (const auto& t : cc) {
      CHECK(t.object_a != t.object_b);
      CHECK(t.diffuser_1 != t.diffuser_2);
      CHECK(t.object_a < 6);
      CHECK(t.diffuser_2 < 4);
    }
  }

  TEST_CASE("activation similarity is 1 for identical inputs") {
    model::ArchSpec a;
    a.input_size = 8;
    a.encoder_blocks = a.decoder_blocks = 1;
    a.layers_per_block = 1;
    a.growth = 3;
    a.stem_channels = 3;
    model::DenseUNet<float> net(a, model::Task::binary, 5);
    nn::Tensor<float> x({1, 8, 8});
    Rng r(6);
    for (auto& v : x.values()) v = static_cast<float>(r.uniform());
    const auto curve = activation_similarity(net, {{x, x, x}}, {0, 1, 2});
    REQUIRE(curve.size() == 3);
    for (const auto& l : curve) {
      CHECK(l.pairs == 3);
      CHECK(l.mean_pcc == doctest::Approx(1.0));
    }
  }
}
