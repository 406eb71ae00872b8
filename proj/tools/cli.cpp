#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "specklenet/analysis.hpp"
#include "specklenet/datagen.hpp"
#include "specklenet/error.hpp"
#include "specklenet/model/checkpoint.hpp"
#include "specklenet/model/trainer.hpp"
#include "specklenet/optics.hpp"
#include "specklenet/parallel.hpp"
#include "specklenet/pgm.hpp"

namespace specklenet::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Common {
  std::string out;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool deterministic = false;
  std::string config;
};

// Real-valued option whose recorded default round-trips exactly.
CLI::Option* add_real(CLI::App* sub, const std::string& name, double& v, const std::string& desc) {
  return sub->add_option(name, v, desc)->default_str(fmt(v));
}

void add_common(CLI::App* sub, Common& c, std::uint64_t default_seed) {
  c.seed = default_seed;
  sub->add_option("--out", c.out, "Output root (dataset/, checkpoints/, reports/)")->required();
  sub->add_option("--seed", c.seed, "Global seed");
  sub->add_option("--threads", c.threads, "Worker cap; 0 falls back to SPECKLENET_THREADS, then 1");
  sub->add_flag("--deterministic", c.deterministic, "Fixed work partition and reduction order");
  sub->add_option("--config", c.config, "JSON object of option values; explicit flags win");
}

struct OpticsFlags {
  optics::SystemConfig cfg;
  double feature_size = 63.0;
  double phase_std = 2.0 * std::numbers::pi;
};

void add_optics(CLI::App* sub, OpticsFlags& o) {
  auto& c = o.cfg;
  add_real(sub, "--wavelength", c.wavelength, "Wavelength (um)");
  add_real(sub, "--f1", c.f1, "L1 focal length (um)");
  add_real(sub, "--f2", c.f2, "L2 focal length (um)");
  add_real(sub, "--pupil", c.pupil_diameter, "Iris diameter (um)");
  add_real(sub, "--pitch", c.object_pitch, "Object-plane sample pitch (um)");
  sub->add_option("--grid", c.grid_size, "Simulation grid side (power of two)");
  add_real(sub, "--defocus", c.defocus, "Object-to-diffuser distance (um)");
  add_real(sub, "--refractive-index", c.refractive_index, "Diffuser glass index");
  sub->add_option("--region", c.object_region, "Object/camera window side (samples)");
  add_real(sub, "--leak", c.slm_leak, "Amplitude of off SLM pixels");
  add_real(sub, "--feature-size", o.feature_size, "Diffuser 1/e correlation length (um)");
  add_real(sub, "--phase-std", o.phase_std, "Diffuser phase standard deviation (rad)");
}

// Options are named by their long flag; JSON keys use the same names.
std::string key_of(const CLI::Option* opt) { return opt->get_lnames().empty() ? "" : opt->get_lnames().front(); }

bool explicitly_given(const std::vector<std::string>& args, const std::string& key) {
  const std::string flag = "--" + key;
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_object() || v.is_array() || v.is_null()) throw UsageError("config values must be scalars or arrays");
  return v.dump();
}

// Expands --config into ordinary flags placed before the explicit ones.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::optional<std::string> path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path) return args;
  std::ifstream in(*path);
  if (!in) throw UsageError("cannot read config file " + *path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config file " + *path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file " + *path + " must hold a JSON object");
  std::vector<std::string> injected;
  for (const auto& [key, value] : j.items()) {
    if (key == "command" || key == "config" || explicitly_given(args, key)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) injected.push_back("--" + key);
    } else if (value.is_array()) {
      for (const auto& e : value) {
        injected.push_back("--" + key);
        injected.push_back(scalar_text(e));
      }
    } else {
      injected.push_back("--" + key);
      injected.push_back(scalar_text(value));
    }
  }
  std::vector<std::string> out{args.front()};
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

json typed(const std::string& s) {
  double d = 0.0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, d);
  if (!s.empty() && r.ec == std::errc() && r.ptr == end) {
    std::uint64_t u = 0;
    const auto ru = std::from_chars(s.data(), end, u);
    if (ru.ec == std::errc() && ru.ptr == end) return u;
    return d;
  }
  return s;
}

json resolved_config(const CLI::App* sub) {
  json j;
  j["command"] = sub->get_name();
  for (const auto* opt : sub->get_options()) {
    const auto key = key_of(opt);
    if (key.empty() || key == "help" || key == "config") continue;
    if (opt->get_type_size() == 0) {
      j[key] = opt->count() > 0;
      continue;
    }
    const bool multi = opt->get_items_expected_max() > 1;
    std::vector<std::string> values = opt->results();
    if (opt->count() == 0) {
      const auto def = opt->get_default_str();
      if (def.empty() || def == "[]") continue;
      values = {def};
      if (multi && def.front() == '[' && def.back() == ']') {
        values.clear();
        std::stringstream ss(def.substr(1, def.size() - 2));
        for (std::string v; std::getline(ss, v, ',');) values.push_back(v);
      }
    }
    if (multi) {
      json arr = json::array();
      for (const auto& v : values) arr.push_back(typed(v));
      j[key] = arr;
    } else {
      j[key] = typed(values.back());
    }
  }
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

fs::path run_dir(const Common& c, const fs::path& sub, const CLI::App* app) {
  const fs::path dir = fs::path(c.out) / sub;
  fs::create_directories(dir);
  write_text(dir / "resolved-config.json", resolved_config(app).dump(2) + "\n");
  return dir;
}

void apply_threads(const Common& c) { set_thread_count(c.threads); }

datagen::DatasetManifest open_manifest(const std::string& flag, const Common& c) {
  const fs::path p = flag.empty() ? fs::path(c.out) / "dataset" / "manifest.json" : fs::path(flag);
  if (!fs::exists(p)) throw IoError("manifest not found: " + p.string());
  return datagen::read_manifest(p);
}

// ------------------------------------------------------------------- gen

struct GenArgs {
  Common common;
  OpticsFlags optics;
  std::size_t train_diffusers = 4, test_diffusers = 5, train_objects = 150;
  std::size_t group2 = 0, group3 = 0, group4 = 0;
  double stroke_scale = 2.0;
  std::string task = "binary";
  std::string import_path;
  double import_threshold = 0.0;
};

void setup_gen(CLI::App* sub, GenArgs& a) {
  add_common(sub, a.common, 7);
  add_optics(sub, a.optics);
  sub->add_option("--train-diffusers", a.train_diffusers, "Training diffusers")->check(CLI::PositiveNumber);
  sub->add_option("--test-diffusers", a.test_diffusers, "Unseen test diffusers")->check(CLI::PositiveNumber);
  sub->add_option("--train-objects", a.train_objects, "Training objects")->check(CLI::PositiveNumber);
  sub->add_option("--group2", a.group2, "Group 2 objects (0: derived)");
  sub->add_option("--group3", a.group3, "Group 3 objects (0: derived)");
  sub->add_option("--group4", a.group4, "Group 4 objects (0: derived)");
  add_real(sub, "--stroke-scale", a.stroke_scale, "Sprite stroke width multiplier");
  sub->add_option("--task", a.task, "binary | grayscale")->check(CLI::IsMember({"binary", "grayscale"}));
  sub->add_option("--import", a.import_path, "Image file or directory replacing procedural train objects");
  add_real(sub, "--import-threshold", a.import_threshold, "Imported pixels at or below this become 0");
}

int cmd_gen(const GenArgs& a, const CLI::App* sub, std::ostream& out) {
  datagen::DatasetConfig cfg;
  cfg.optics = a.optics.cfg;
  cfg.feature_size = a.optics.feature_size;
  cfg.phase_std = a.optics.phase_std;
  cfg.n_train_diffusers = a.train_diffusers;
  cfg.n_test_diffusers = a.test_diffusers;
  cfg.n_train_objects = a.train_objects;
  cfg.n_group2_objects = a.group2;
  cfg.n_group3_objects = a.group3;
  cfg.n_group4_objects = a.group4;
  cfg.stroke_scale = a.stroke_scale;
  cfg.seed = a.common.seed;
  cfg.task = datagen::parse_task(a.task);
  if (!a.import_path.empty()) cfg.import_path = a.import_path;
  cfg.import_threshold = a.import_threshold;
  try {
    cfg.optics.validate();
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const fs::path dir = run_dir(a.common, "dataset", sub);
  const auto m = datagen::build_dataset(cfg, dir);
  out << "manifest: " << (dir / "manifest.json").string() << "\n";
  for (auto s : {datagen::Split::train, datagen::Split::group1, datagen::Split::group2, datagen::Split::group3,
                 datagen::Split::group4})
    out << datagen::to_string(s) << ": " << m.split(s).size() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------- characterize

struct CharArgs {
  Common common;
  OpticsFlags optics;
  std::vector<std::uint64_t> diffuser_seeds;
  std::string manifest;
  int max_shift = 40;
};

void setup_char(CLI::App* sub, CharArgs& a) {
  add_common(sub, a.common, 7);
  add_optics(sub, a.optics);
  sub->add_option("--diffuser-seed", a.diffuser_seeds, "Diffuser seeds to characterize (default: --seed)");
  sub->add_option("--manifest", a.manifest, "Characterize every diffuser of this dataset instead");
  sub->add_option("--max-shift", a.max_shift, "Isoplanatism scan length (samples)")->check(CLI::PositiveNumber);
}

int cmd_char(const CharArgs& a, const CLI::App* sub, std::ostream& out) {
  optics::SystemConfig cfg = a.optics.cfg;
  std::vector<optics::Diffuser> diffusers;
  std::optional<datagen::DatasetManifest> m;
  if (!a.manifest.empty()) {
    m = open_manifest(a.manifest, a.common);
    cfg = m->config.optics;
    for (const auto& d : m->diffusers) diffusers.push_back(datagen::rebuild_diffuser(*m, d.id));
  } else {
    try {
      cfg.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    auto seeds = a.diffuser_seeds;
    if (seeds.empty()) seeds.push_back(a.common.seed);
    for (auto s : seeds) diffusers.push_back(optics::generate_diffuser(cfg, a.optics.feature_size, a.optics.phase_std, s));
  }
  const fs::path dir = run_dir(a.common, fs::path("reports") / "characterize", sub);
  const auto lit = optics::uniform_illumination(cfg);
  std::ostringstream size_csv, iso_csv;
  size_csv << "diffuser_id,seed,fwhm_um,theory_um\n";
  iso_csv << "diffuser_id,shift_px,shift_um,pcc\n";
  for (const auto& d : diffusers) {
    const double fwhm = optics::measure_speckle_size(optics::simulate_speckle(lit, d, cfg));
    size_csv << d.id << ',' << d.seed << ',' << fmt(fwhm) << ',' << fmt(cfg.speckle_size()) << '\n';
    out << d.id << ": speckle FWHM " << fmt(fwhm) << " um (theory " << fmt(cfg.speckle_size()) << " um)\n";
    for (const auto& p : optics::characterize_isoplanatism(d, cfg, a.max_shift))
      iso_csv << d.id << ',' << fmt(p.shift_um / cfg.object_pitch) << ',' << fmt(p.shift_um) << ',' << fmt(p.pcc)
              << '\n';
  }
  write_text(dir / "speckle_size.csv", size_csv.str());
  write_text(dir / "isoplanatism.csv", iso_csv.str());
  out << "reports: " << dir.string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  Common common;
  std::string manifest;
  std::size_t diffusers = 0;
  std::size_t epochs = 50;
  std::size_t batch = 16;
  std::string schedule = "0:1e-4,30:1e-5,40:1e-6";
  model::ArchSpec arch;
  bool resume = false;
  std::size_t stop_after = 0;
};

void setup_train(CLI::App* sub, TrainArgs& a) {
  add_common(sub, a.common, 0);
  sub->add_option("--manifest", a.manifest, "Dataset manifest (default: <out>/dataset/manifest.json)");
  sub->add_option("--diffusers", a.diffusers, "Train on the first k training diffusers (0: all)");
  sub->add_option("--epochs", a.epochs, "Epochs")->check(CLI::PositiveNumber);
  sub->add_option("--batch", a.batch, "Batch size")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20));
  sub->add_option("--schedule", a.schedule, "Learning-rate phases as epoch:lr,epoch:lr,...");
  sub->add_option("--blocks", a.arch.encoder_blocks, "Encoder (and decoder) blocks");
  sub->add_option("--layers", a.arch.layers_per_block, "Layers per dense block");
  sub->add_option("--growth", a.arch.growth, "Growth rate");
  sub->add_option("--stem", a.arch.stem_channels, "Stem channels");
  sub->add_flag("--resume", a.resume, "Continue from the most advanced checkpoint under <out>/checkpoints");
  sub->add_option("--stop-after", a.stop_after, "Stop after this many completed epochs (0: run to the end)");
}

std::vector<std::pair<std::size_t, double>> parse_schedule(const std::string& text) {
  std::vector<std::pair<std::size_t, double>> phases;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw UsageError("schedule entry '" + item + "' is not epoch:lr");
    try {
      std::size_t used = 0;
      const auto epoch = std::stoull(item.substr(0, colon), &used);
      if (used != colon) throw std::invalid_argument("epoch");
      const auto lr_text = item.substr(colon + 1);
      const double lr = std::stod(lr_text, &used);
      if (used != lr_text.size() || !(lr > 0.0)) throw std::invalid_argument("lr");
      phases.emplace_back(static_cast<std::size_t>(epoch), lr);
    } catch (const std::logic_error&) {
      throw UsageError("schedule entry '" + item + "' is not epoch:lr");
    }
  }
  return phases;
}

void write_loss_csv(const std::vector<model::EpochLog>& log, const fs::path& path) {
  std::ostringstream s;
  s << "epoch,lr,mean_loss\n";
  for (const auto& e : log) s << e.epoch << ',' << fmt(e.lr) << ',' << fmt(e.mean_loss) << '\n';
  write_text(path, s.str());
}

int cmd_train(TrainArgs a, const CLI::App* sub, std::ostream& out) {
  model::TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.seed = a.common.seed;
  tc.lr_schedule = parse_schedule(a.schedule);
  try {
    tc.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto m = open_manifest(a.manifest, a.common);
  const std::size_t available = m.config.n_train_diffusers;
  const std::size_t k = a.diffusers == 0 ? available : a.diffusers;
  if (k > available)
    throw UsageError("--diffusers " + std::to_string(k) + " exceeds the " + std::to_string(available) +
                     " training diffusers in the manifest");
  a.arch.decoder_blocks = a.arch.encoder_blocks;
  a.arch.input_size = m.config.optics.object_region / 2;
  try {
    a.arch.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  const fs::path ckdir = run_dir(a.common, "checkpoints", sub);
  model::NetworkState state(model::DenseUNet<float>(a.arch, m.config.task, a.common.seed));
  if (a.resume) {
    if (const auto latest = model::latest_checkpoint(ckdir)) {
      auto loaded = model::load_checkpoint(*latest);
      if (!(loaded.state.net.arch() == a.arch) || loaded.state.net.task() != m.config.task)
        throw CheckpointIncompatibleError(latest->string() + " does not match the requested architecture/task");
      state = std::move(loaded.state);
      out << "resuming from " << latest->string() << " at epoch " << state.epoch << "\n";
    } else {
      out << "no checkpoint under " << ckdir.string() << "; starting fresh\n";
    }
  }

  const auto records = datagen::training_subset(m, k);
  std::vector<datagen::Sample> samples(records.size());
  parallel_for(records.size(), [&](std::size_t i) { samples[i] = datagen::load_sample(m, *records[i]); });
  out << "training on " << samples.size() << " samples from " << k << " diffuser(s), "
      << state.net.parameter_count() << " parameters\n";

  model::TrainOptions opts;
  opts.checkpoint_dir = ckdir;
  opts.on_epoch = [&](const model::EpochLog& e) {
    out << "epoch " << e.epoch << " lr " << fmt(e.lr) << " loss " << fmt(e.mean_loss) << "\n" << std::flush;
  };
  if (a.stop_after > 0) opts.stop_after = a.stop_after;
  model::train(state, samples, tc, opts);
  write_loss_csv(state.log, ckdir / "loss.csv");
  if (state.epoch < tc.epochs)
    out << "stopped after epoch " << state.epoch << " of " << tc.epochs << "\n";
  else
    out << "checkpoint: " << (ckdir / "final").string() << "\n";
  return kExitOk;
}

// --------------------------------------------------------------- evaluate

struct EvalArgs {
  Common common;
  std::string manifest;
  std::string checkpoint;
  std::vector<std::string> splits{"group1", "group2", "group3", "group4"};
  std::string task;
  std::size_t overlays = 0;
  std::size_t batch = 32;
};

void setup_eval(CLI::App* sub, EvalArgs& a) {
  add_common(sub, a.common, 0);
  sub->add_option("--manifest", a.manifest, "Dataset manifest (default: <out>/dataset/manifest.json)");
  sub->add_option("--checkpoint", a.checkpoint, "Checkpoint directory (default: <out>/checkpoints/final)");
  sub->add_option("--split", a.splits, "Splits to evaluate")
      ->check(CLI::IsMember({"train", "group1", "group2", "group3", "group4"}));
  sub->add_option("--task", a.task, "Expected task; must match the checkpoint")
      ->check(CLI::IsMember({"binary", "grayscale"}));
  sub->add_option("--overlays", a.overlays, "Overlay PGMs written per split");
  sub->add_option("--batch", a.batch, "Inference batch size")->check(CLI::PositiveNumber);
}

Grid2D<double> plane(const nn::Tensor<float>& t, std::size_t c) {
  const std::size_t h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  Grid2D<double> g(h, w);
  for (std::size_t i = 0; i < h * w; ++i) g.data()[i] = t[c * h * w + i];
  return g;
}

model::LoadedCheckpoint open_checkpoint(const std::string& flag, const Common& c) {
  const fs::path p = flag.empty() ? fs::path(c.out) / "checkpoints" / "final" : fs::path(flag);
  if (!fs::exists(p / "manifest.json")) throw IoError("checkpoint not found: " + p.string());
  return model::load_checkpoint(p);
}

int cmd_eval(const EvalArgs& a, const CLI::App* sub, std::ostream& out, std::ostream& err) {
  std::vector<datagen::Split> splits;
  for (const auto& s : a.splits) splits.push_back(datagen::parse_split(s));
  const auto m = open_manifest(a.manifest, a.common);
  const auto ck = open_checkpoint(a.checkpoint, a.common);
  const auto& net = ck.state.net;
  if (!a.task.empty() && datagen::parse_task(a.task) != net.task()) {
    err << "error: --task " << a.task << " but the checkpoint was trained for " << datagen::to_string(net.task())
        << "\n";
    return kExitFailure;
  }
  if (m.config.task != net.task()) {
    err << "error: dataset task " << datagen::to_string(m.config.task) << " but the checkpoint was trained for "
        << datagen::to_string(net.task()) << "\n";
    return kExitFailure;
  }
  if (net.arch().input_size != m.config.optics.object_region / 2) {
    err << "error: checkpoint input size " << net.arch().input_size << " does not match the dataset ("
        << m.config.optics.object_region / 2 << ")\n";
    return kExitFailure;
  }
  const fs::path dir = run_dir(a.common, fs::path("reports") / "evaluate", sub);
  const auto report = analysis::evaluate(net, m, splits, a.batch);
  analysis::write_metrics_csv(report, dir / "metrics.csv");
  analysis::write_metrics_json(report, dir / "metrics.json");
  for (const auto& [name, s] : report.by_split())
    out << name << ": n=" << s.count << " JI " << fmt(s.mean_ji) << " PCC " << fmt(s.mean_pcc) << "\n";
  if (a.overlays > 0) {
    fs::create_directories(dir / "overlays");
    for (auto s : splits) {
      const auto recs = m.split(s);
      for (std::size_t i = 0; i < std::min(a.overlays, recs.size()); ++i) {
        const auto sample = datagen::load_sample(m, *recs[i]);
        nn::Tensor<float> x = sample.input;
        x.reshape({1, 1, x.dim(1), x.dim(2)});
        const auto pred = model::predict(net, x);
        Grid2D<double> mask = plane(pred.object, 0);
        for (auto& v : mask.values()) v = v > 0.5 ? 1.0 : 0.0;
        Grid2D<double> truth = plane(sample.target, 0);
        for (auto& v : truth.values()) v = v > 0.0 ? 1.0 : 0.0;
        const auto name = std::string(datagen::to_string(s)) + "_" + recs[i]->diffuser_id + "_" +
                          std::to_string(recs[i]->object_id) + ".pgm";
        pgm::write(dir / "overlays" / name, analysis::overlay(mask, truth));
      }
    }
  }
  out << "reports: " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  Common common;
  std::string mode;
  std::string manifest;
  std::string checkpoint;
  std::size_t pairs = 200;
  std::size_t triples = 20;
  std::size_t window = 32;
  std::size_t groups = 20;
  std::string split = "group1";
};

void setup_analyze(CLI::App* sub, AnalyzeArgs& a) {
  add_common(sub, a.common, 0);
  sub->add_option("--mode", a.mode, "decorrelation | crosscorr | activations")
      ->required()
      ->check(CLI::IsMember({"decorrelation", "crosscorr", "activations"}));
  sub->add_option("--manifest", a.manifest, "Dataset manifest (default: <out>/dataset/manifest.json)");
  sub->add_option("--checkpoint", a.checkpoint, "Checkpoint directory (activations mode)");
  sub->add_option("--pairs", a.pairs, "Pairs per category (decorrelation)")->check(CLI::PositiveNumber);
  sub->add_option("--triples", a.triples, "Sampled triples (crosscorr)")->check(CLI::PositiveNumber);
  sub->add_option("--window", a.window, "Central comparison window (crosscorr)")->check(CLI::PositiveNumber);
  sub->add_option("--groups", a.groups, "Objects compared across diffusers (activations)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--split", a.split, "Split supplying activation groups")
      ->check(CLI::IsMember({"train", "group1", "group2", "group3", "group4"}));
}

int cmd_analyze(const AnalyzeArgs& a, const CLI::App* sub, std::ostream& out) {
  if (a.mode == "activations" && a.checkpoint.empty()) throw UsageError("--mode activations requires --checkpoint");
  const auto m = open_manifest(a.manifest, a.common);
  const fs::path dir = run_dir(a.common, fs::path("reports") / a.mode, sub);
  if (a.mode == "decorrelation") {
    const auto studies = analysis::decorrelation_study(m, a.pairs, a.common.seed);
    analysis::write_decorrelation_csv(studies, dir / "decorrelation.csv");
    analysis::write_histogram_csv(studies, dir / "histogram.csv");
    for (const auto& s : studies) out << analysis::to_string(s.category) << ": mean PCC " << fmt(s.mean()) << "\n";
  } else if (a.mode == "crosscorr") {
    const auto table = analysis::train_speckle_table(m);
    const auto samples = analysis::cross_correlation_study(table.source, table.objects.size(), table.diffusers.size(),
                                                           a.triples, a.common.seed, a.window);
    analysis::write_crosscorr_csv(samples, dir / "crosscorr.csv");
    const auto& s0 = samples.front();
    const auto a1 = table.source(s0.object_a, s0.diffuser_1);
    analysis::write_map_pgm(analysis::cross_correlation_map(a1, a1), dir / "reference.pgm");
    analysis::write_map_pgm(analysis::cross_correlation_map(a1, table.source(s0.object_a, s0.diffuser_2)),
                            dir / "same_object.pgm");
    analysis::write_map_pgm(analysis::cross_correlation_map(a1, table.source(s0.object_b, s0.diffuser_2)),
                            dir / "different_object.pgm");
    const auto wins = std::count_if(samples.begin(), samples.end(), [](const analysis::CrossCorrSample& s) {
      return s.result.same_object > s.result.different_object;
    });
    out << "same-object map closer to the reference in " << wins << " of " << samples.size() << " triples\n";
  } else {
    const auto ck = open_checkpoint(a.checkpoint, a.common);
    const auto groups = analysis::activation_groups(m, datagen::parse_split(a.split), a.groups);
    if (groups.empty()) throw ConfigError("split " + a.split + " has no object seen through two diffusers");
    std::vector<std::size_t> taps(ck.state.net.arch().activation_layers());
    for (std::size_t i = 0; i < taps.size(); ++i) taps[i] = i;
    const auto curve = analysis::activation_similarity(ck.state.net, groups, taps);
    analysis::write_activation_csv(curve, dir / "activations.csv");
    std::vector<double> x, y;
    for (const auto& l : curve) {
      x.push_back(static_cast<double>(l.layer));
      y.push_back(l.mean_pcc);
      out << "layer " << l.layer << ": PCC " << fmt(l.mean_pcc) << "\n";
    }
    out << "spearman(layer, PCC) " << fmt(analysis::spearman(x, y)) << "\n";
  }
  out << "reports: " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speckle imaging through unseen diffusers"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  GenArgs gen;
  CharArgs chr;
  TrainArgs trn;
  EvalArgs evl;
  AnalyzeArgs ana;
  auto* sub_gen = app.add_subcommand("gen", "Simulate a dataset");
  auto* sub_char = app.add_subcommand("characterize", "Speckle-size and isoplanatism curves");
  auto* sub_train = app.add_subcommand("train", "Train a network");
  auto* sub_eval = app.add_subcommand("evaluate", "JI/PCC metrics on dataset splits");
  auto* sub_ana = app.add_subcommand("analyze", "Decorrelation, cross-correlation and activation studies");
  setup_gen(sub_gen, gen);
  setup_char(sub_char, chr);
  setup_train(sub_train, trn);
  setup_eval(sub_eval, evl);
  setup_analyze(sub_ana, ana);

  try {
    std::vector<std::string> args = raw_args.empty() ? raw_args : expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (sub_gen->parsed()) {
      apply_threads(gen.common);
      return cmd_gen(gen, sub_gen, out);
    }
    if (sub_char->parsed()) {
      apply_threads(chr.common);
      return cmd_char(chr, sub_char, out);
    }
    if (sub_train->parsed()) {
      apply_threads(trn.common);
      return cmd_train(trn, sub_train, out);
    }
    if (sub_eval->parsed()) {
      apply_threads(evl.common);
      return cmd_eval(evl, sub_eval, out, err);
    }
    apply_threads(ana.common);
    return cmd_analyze(ana, sub_ana, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace specklenet::cli
