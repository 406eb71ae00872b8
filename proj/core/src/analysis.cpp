#include "specklenet/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "specklenet/error.hpp"
#include "specklenet/fft.hpp"
#include "specklenet/model/trainer.hpp"
#include "specklenet/parallel.hpp"
#include "specklenet/pgm.hpp"
#include "specklenet/rng.hpp"
#include "specklenet/stats.hpp"

namespace specklenet::analysis {

using json = nlohmann::json;
using nn::Tensor;

namespace {

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  return f;
}

void finish(std::ofstream& f, const std::filesystem::path& path) {
  f.flush();
  if (!f) throw IoError("write failed: " + path.string());
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

json stats_json(const GroupStats& s) {
  return {{"count", s.count}, {"mean_ji", s.mean_ji}, {"std_ji", s.std_ji}, {"mean_pcc", s.mean_pcc}, {"std_pcc", s.std_pcc}};
}

}  // namespace

double pcc(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ShapeError("pcc: sizes " + std::to_string(a.size()) + " and " + std::to_string(b.size()) + " differ");
  return pearson(a, b);
}

double pcc(const Grid2D<double>& a, const Grid2D<double>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("pcc: image shapes differ");
  return pearson(a.values(), b.values());
}

double jaccard(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("jaccard: mask sizes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] != 0.0 && a[i] != 1.0) || (b[i] != 0.0 && b[i] != 1.0))
      throw InvalidInputError("jaccard: masks must be binary");
    const bool x = a[i] == 1.0, y = b[i] == 1.0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double jaccard(const Grid2D<double>& a, const Grid2D<double>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("jaccard: mask shapes differ");
  return jaccard(a.values(), b.values());
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("spearman: sample sizes differ");
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  return pearson(ra, rb);
}

GroupStats aggregate(std::span<const MetricRow* const> rows) {
  GroupStats s;
  s.count = rows.size();
  if (rows.empty()) return s;
  std::vector<double> ji, pc;
  for (const auto* r : rows) {
    ji.push_back(r->ji);
    pc.push_back(r->pcc);
  }
  s.mean_ji = mean(ji);
  s.std_ji = stddev(ji);
  s.mean_pcc = mean(pc);
  s.std_pcc = stddev(pc);
  return s;
}

std::map<std::string, GroupStats> MetricReport::by_split() const {
  std::map<std::string, std::vector<const MetricRow*>> groups;
  for (const auto& r : rows) groups[std::string(datagen::to_string(r.split))].push_back(&r);
  std::map<std::string, GroupStats> out;
  for (const auto& [k, v] : groups) out[k] = aggregate(v);
  return out;
}

std::map<std::string, GroupStats> MetricReport::by_diffuser() const {
  std::map<std::string, std::vector<const MetricRow*>> groups;
  for (const auto& r : rows) groups[std::string(datagen::to_string(r.split)) + "/" + r.diffuser_id].push_back(&r);
  std::map<std::string, GroupStats> out;
  for (const auto& [k, v] : groups) out[k] = aggregate(v);
  return out;
}

std::vector<MetricRow> evaluate_samples(const model::DenseUNet<float>& net, const std::vector<datagen::Sample>& samples,
                                        std::size_t batch_size) {
  std::vector<MetricRow> rows(samples.size());
  if (batch_size == 0) batch_size = 1;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) idx.push_back(i);
    const auto [x, y] = model::make_batch(samples, idx);
    const Tensor<float> prob = net.infer(x);
    const std::size_t P = prob.plane();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      std::vector<double> mask(P), truth(P), p0(P), g0(P);
      for (std::size_t i = 0; i < P; ++i) {
        p0[i] = prob[(k * 2) * P + i];
        mask[i] = prob[(k * 2) * P + i] > prob[(k * 2 + 1) * P + i] ? 1.0 : 0.0;
        g0[i] = y[(k * 2) * P + i];
        truth[i] = g0[i] > 0.0 ? 1.0 : 0.0;
      }
      auto& row = rows[idx[k]];
      row.record_id = std::to_string(idx[k]);
      row.ji = jaccard(mask, truth);
      try {
        row.pcc = pcc(p0, g0);
      } catch (const DegenerateInputError&) {
        row.pcc = 0.0;
      }
    }
  }
  return rows;
}

MetricReport evaluate(const model::DenseUNet<float>& net, const datagen::DatasetManifest& manifest,
                      const std::vector<datagen::Split>& splits, std::size_t batch_size) {
  std::vector<const datagen::RecordEntry*> records;
  for (auto s : splits)
    for (const auto* r : manifest.split(s)) records.push_back(r);
  std::vector<datagen::Sample> samples(records.size());
  parallel_for(records.size(), [&](std::size_t i) { samples[i] = datagen::load_sample(manifest, *records[i]); });
  MetricReport report;
  report.rows = evaluate_samples(net, samples, batch_size);
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& row = report.rows[i];
    const auto* r = records[i];
    row.record_id = std::string(datagen::to_string(r->split)) + "/" + r->diffuser_id + "/" + std::to_string(r->object_id);
    row.diffuser_id = r->diffuser_id;
    row.split = r->split;
    row.class_tag = r->class_tag;
  }
  return report;
}

std::string_view to_string(PairCategory c) {
  switch (c) {
    case PairCategory::same_diffuser_diff_objects: return "same_diffuser_diff_objects";
    case PairCategory::same_object_diff_diffusers: return "same_object_diff_diffusers";
    default: return "diff_both";
  }
}

double CorrelationStudy::mean() const { return specklenet::mean(samples); }

std::array<std::size_t, kHistogramBins> histogram(std::span<const double> values) {
  std::array<std::size_t, kHistogramBins> h{};
  const double width = (kHistogramHi - kHistogramLo) / static_cast<double>(kHistogramBins);
  for (double v : values) {
    const double pos = std::floor((v - kHistogramLo) / width);
    const auto bin = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(kHistogramBins - 1)));
    ++h[bin];
  }
  return h;
}

std::array<CorrelationStudy, 3> decorrelation_study(const SpeckleSource& source, std::size_t n_objects,
                                                    std::size_t n_diffusers, std::size_t n_pairs,
                                                    std::uint64_t seed) {
  if (n_objects < 2 || n_diffusers < 2)
    throw ConfigError("decorrelation study needs >= 2 objects and >= 2 diffusers, got " + std::to_string(n_objects) +
                      " and " + std::to_string(n_diffusers));
  std::array<CorrelationStudy, 3> out;
  const std::array<PairCategory, 3> cats{PairCategory::same_diffuser_diff_objects,
                                         PairCategory::same_object_diff_diffusers, PairCategory::diff_both};
  const auto last_obj = static_cast<std::int64_t>(n_objects) - 1;
  const auto last_dif = static_cast<std::int64_t>(n_diffusers) - 1;
  for (std::size_t c = 0; c < 3; ++c) {
    out[c].category = cats[c];
    out[c].samples.assign(n_pairs, 0.0);
    parallel_for(n_pairs, [&](std::size_t i) {
      Rng rng(derive_seed(seed, to_string(cats[c]), i));
      auto a = static_cast<std::size_t>(rng.uniform_int(0, last_obj));
      auto b = a;
      auto d1 = static_cast<std::size_t>(rng.uniform_int(0, last_dif));
      auto d2 = d1;
      if (cats[c] != PairCategory::same_object_diff_diffusers) {
        b = static_cast<std::size_t>(rng.uniform_int(0, last_obj - 1));
        if (b >= a) ++b;
      }
      if (cats[c] != PairCategory::same_diffuser_diff_objects) {
        d2 = static_cast<std::size_t>(rng.uniform_int(0, last_dif - 1));
        if (d2 >= d1) ++d2;
      }
      out[c].samples[i] = pcc(source(a, d1), source(b, d2));
    });
    out[c].histogram = histogram(out[c].samples);
  }
  return out;
}

SpeckleTable train_speckle_table(const datagen::DatasetManifest& manifest) {
  SpeckleTable t;
  t.diffusers = manifest.diffuser_ids(datagen::DiffuserRole::train);
  std::map<std::pair<std::uint64_t, std::size_t>, const datagen::RecordEntry*> index;
  for (const auto* r : manifest.split(datagen::Split::train)) {
    const auto d = static_cast<std::size_t>(std::find(t.diffusers.begin(), t.diffusers.end(), r->diffuser_id) -
                                            t.diffusers.begin());
    index[{r->object_id, d}] = r;
    if (std::find(t.objects.begin(), t.objects.end(), r->object_id) == t.objects.end())
      t.objects.push_back(r->object_id);
  }
  for (auto o : t.objects)
    for (std::size_t d = 0; d < t.diffusers.size(); ++d)
      if (!index.contains({o, d}))
        throw ConfigError("manifest lacks a train speckle for object " + std::to_string(o) + " through " +
                          t.diffusers[d]);
  t.source = [&manifest, objects = t.objects, index = std::move(index)](std::size_t o, std::size_t d) {
    return datagen::load_speckle(manifest, *index.at({objects.at(o), d}));
  };
  return t;
}

std::array<CorrelationStudy, 3> decorrelation_study(const datagen::DatasetManifest& manifest, std::size_t n_pairs,
                                                    std::uint64_t seed) {
  const auto t = train_speckle_table(manifest);
  return decorrelation_study(t.source, t.objects.size(), t.diffusers.size(), n_pairs, seed);
}

Grid2D<double> cross_correlation_map(const Grid2D<double>& a, const Grid2D<double>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("cross_correlation_map: shapes differ");
  const double ma = mean(a.values()), mb = mean(b.values());
  Grid2D<fft::Complex> fa(a.rows(), a.cols()), fb(b.rows(), b.cols());
  double ea = 0.0, eb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double va = a.data()[i] - ma, vb = b.data()[i] - mb;
    fa.data()[i] = va;
    fb.data()[i] = vb;
    ea += va * va;
    eb += vb * vb;
  }
  if (ea <= 0.0 || eb <= 0.0) throw DegenerateInputError("cross_correlation_map: zero-variance input");
  fft::forward(fa);
  fft::forward(fb);
  for (std::size_t i = 0; i < fa.size(); ++i) fa.data()[i] = std::conj(fa.data()[i]) * fb.data()[i];
  fft::inverse(fa);
  const double norm = 1.0 / std::sqrt(ea * eb);
  Grid2D<double> c(a.rows(), a.cols());
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] = fa.data()[i].real() * norm;
  return fft::fftshift(c);
}

CrossCorrTriple cross_correlation_triple(const Grid2D<double>& a_d1, const Grid2D<double>& a_d2,
                                         const Grid2D<double>& b_d2, std::size_t window) {
  if (window > a_d1.rows() || window > a_d1.cols()) throw InvalidInputError("cross_correlation_triple: window too large");
  const auto ref = center_crop(cross_correlation_map(a_d1, a_d1), window);
  return {pcc(center_crop(cross_correlation_map(a_d1, a_d2), window), ref),
          pcc(center_crop(cross_correlation_map(a_d1, b_d2), window), ref)};
}

std::vector<CrossCorrSample> cross_correlation_study(const SpeckleSource& source, std::size_t n_objects,
                                                     std::size_t n_diffusers, std::size_t n_triples,
                                                     std::uint64_t seed, std::size_t window) {
  if (n_objects < 2 || n_diffusers < 2)
    throw ConfigError("cross-correlation study needs >= 2 objects and >= 2 diffusers");
  std::vector<CrossCorrSample> out(n_triples);
  parallel_for(n_triples, [&](std::size_t i) {
    Rng rng(derive_seed(seed, "crosscorr", i));
    auto& s = out[i];
    s.object_a = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n_objects) - 1));
    s.object_b = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n_objects) - 2));
    if (s.object_b >= s.object_a) ++s.object_b;
    s.diffuser_1 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n_diffusers) - 1));
    s.diffuser_2 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n_diffusers) - 2));
    if (s.diffuser_2 >= s.diffuser_1) ++s.diffuser_2;
    s.result = cross_correlation_triple(source(s.object_a, s.diffuser_1), source(s.object_a, s.diffuser_2),
                                        source(s.object_b, s.diffuser_2), window);
  });
  return out;
}

std::vector<LayerSimilarity> activation_similarity(const model::DenseUNet<float>& net,
                                                   const std::vector<std::vector<Tensor<float>>>& groups,
                                                   const std::vector<std::size_t>& taps) {
  std::vector<std::vector<double>> per_layer(taps.size());
  for (const auto& group : groups) {
    if (group.size() < 2) throw InvalidInputError("activation_similarity: each group needs >= 2 inputs");
    std::vector<std::vector<Tensor<float>>> acts;
    for (const auto& input : group) {
      Tensor<float> x = input;
      x.reshape({1, 1, input.dim(input.rank() - 2), input.dim(input.rank() - 1)});
      acts.push_back(net.activations(x, taps));
    }
    for (std::size_t i = 0; i < acts.size(); ++i)
      for (std::size_t j = i + 1; j < acts.size(); ++j)
        for (std::size_t t = 0; t < taps.size(); ++t) {
          const auto& A = acts[i][t];
          const auto& B = acts[j][t];
          const std::size_t P = A.plane();
          double sum = 0.0;
          std::size_t used = 0;
          for (std::size_t c = 0; c < A.c(); ++c) {
            std::vector<double> va(A.data() + c * P, A.data() + (c + 1) * P);
            std::vector<double> vb(B.data() + c * P, B.data() + (c + 1) * P);
            try {
              sum += pearson(va, vb);
              ++used;
            } catch (const DegenerateInputError&) {
            }
          }
          if (used > 0) per_layer[t].push_back(sum / static_cast<double>(used));
        }
  }
  std::vector<LayerSimilarity> out;
  for (std::size_t t = 0; t < taps.size(); ++t) {
    LayerSimilarity s{taps[t], 0.0, 0.0, per_layer[t].size()};
    if (!per_layer[t].empty()) {
      s.mean_pcc = mean(per_layer[t]);
      s.std_pcc = stddev(per_layer[t]);
    }
    out.push_back(s);
  }
  return out;
}

std::vector<std::vector<Tensor<float>>> activation_groups(const datagen::DatasetManifest& manifest,
                                                          datagen::Split split, std::size_t max_groups) {
  std::vector<std::uint64_t> order;
  std::map<std::uint64_t, std::vector<const datagen::RecordEntry*>> by_object;
  for (const auto* r : manifest.split(split)) {
    auto& v = by_object[r->object_id];
    if (v.empty()) order.push_back(r->object_id);
    v.push_back(r);
  }
  std::vector<std::vector<Tensor<float>>> groups;
  for (auto id : order) {
    if (groups.size() >= max_groups) break;
    const auto& recs = by_object[id];
    if (recs.size() < 2) continue;
    std::vector<Tensor<float>> g;
    for (const auto* r : recs) g.push_back(datagen::load_sample(manifest, *r).input);
    groups.push_back(std::move(g));
  }
  return groups;
}

Grid2D<std::uint8_t> overlay(const Grid2D<double>& prediction, const Grid2D<double>& truth) {
  if (prediction.rows() != truth.rows() || prediction.cols() != truth.cols()) throw ShapeError("overlay: shapes differ");
  Grid2D<std::uint8_t> out(truth.rows(), truth.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool p = prediction.data()[i] > 0.5, t = truth.data()[i] > 0.5;
    out.data()[i] = p && t ? kTruePositive : p ? kFalsePositive : t ? kFalseNegative : 0;
  }
  return out;
}

void write_metrics_csv(const MetricReport& report, const std::filesystem::path& path) {
  auto f = open_out(path);
  f << "record_id,diffuser_id,split,class,ji,pcc\n";
  for (const auto& r : report.rows)
    f << r.record_id << ',' << r.diffuser_id << ',' << datagen::to_string(r.split) << ','
      << datagen::to_string(r.class_tag) << ',' << fmt(r.ji) << ',' << fmt(r.pcc) << '\n';
  finish(f, path);
}

MetricReport read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(f, line);
  if (line != "record_id,diffuser_id,split,class,ji,pcc") throw FormatError(path.string() + ": unexpected header");
  MetricReport report;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    if (cols.size() != 6) throw FormatError(path.string() + ": malformed row '" + line + "'");
    report.rows.push_back({cols[0], cols[1], datagen::parse_split(cols[2]), datagen::parse_object_class(cols[3]),
                           std::stod(cols[4]), std::stod(cols[5])});
  }
  return report;
}

void write_metrics_json(const MetricReport& report, const std::filesystem::path& path) {
  json j;
  j["splits"] = json::object();
  for (const auto& [k, s] : report.by_split()) j["splits"][k] = stats_json(s);
  j["diffusers"] = json::object();
  for (const auto& [k, s] : report.by_diffuser()) j["diffusers"][k] = stats_json(s);
  auto f = open_out(path);
  f << j.dump(2) << '\n';
  finish(f, path);
}

void write_decorrelation_csv(const std::array<CorrelationStudy, 3>& studies, const std::filesystem::path& path) {
  auto f = open_out(path);
  f << "category,pcc\n";
  for (const auto& s : studies)
    for (double v : s.samples) f << to_string(s.category) << ',' << fmt(v) << '\n';
  finish(f, path);
}

void write_histogram_csv(const std::array<CorrelationStudy, 3>& studies, const std::filesystem::path& path) {
  auto f = open_out(path);
  f << "category,bin_lo,bin_hi,count\n";
  const double width = (kHistogramHi - kHistogramLo) / static_cast<double>(kHistogramBins);
  for (const auto& s : studies)
    for (std::size_t b = 0; b < kHistogramBins; ++b)
      f << to_string(s.category) << ',' << fmt(kHistogramLo + width * static_cast<double>(b)) << ','
        << fmt(kHistogramLo + width * static_cast<double>(b + 1)) << ',' << s.histogram[b] << '\n';
  finish(f, path);
}

void write_crosscorr_csv(const std::vector<CrossCorrSample>& samples, const std::filesystem::path& path) {
  auto f = open_out(path);
  f << "triple,object_a,object_b,diffuser_1,diffuser_2,same_object,different_object\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    f << i << ',' << s.object_a << ',' << s.object_b << ',' << s.diffuser_1 << ',' << s.diffuser_2 << ','
      << fmt(s.result.same_object) << ',' << fmt(s.result.different_object) << '\n';
  }
  finish(f, path);
}

void write_activation_csv(const std::vector<LayerSimilarity>& curve, const std::filesystem::path& path) {
  auto f = open_out(path);
  f << "layer_index,mean_pcc,std_pcc\n";
  for (const auto& l : curve) f << l.layer << ',' << fmt(l.mean_pcc) << ',' << fmt(l.std_pcc) << '\n';
  finish(f, path);
}

void write_map_pgm(const Grid2D<double>& map, const std::filesystem::path& path) {
  pgm::write(path, pgm::stretch(map));
}

}  // namespace specklenet::analysis
