#include "specklenet/model/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "specklenet/error.hpp"
#include "specklenet/spkt.hpp"

namespace specklenet::model {

using json = nlohmann::json;
using nn::Tensor;

namespace {

constexpr const char* kFormat = "specklenet-checkpoint";
constexpr int kVersion = 1;

std::vector<std::uint32_t> dims32(const Tensor<float>& t) {
  std::vector<std::uint32_t> d;
  for (auto v : t.dims()) d.push_back(static_cast<std::uint32_t>(v));
  return d;
}

void save_tensor(const std::filesystem::path& path, const Tensor<float>& t) {
  spkt::write(path, dims32(t), t.values());
}

void load_tensor(const std::filesystem::path& path, Tensor<float>& into, const std::string& name) {
  spkt::Array a;
  try {
    a = spkt::read(path);
  } catch (const FormatError& e) {
    throw CheckpointIncompatibleError(std::string("checkpoint tensor ") + name + ": " + e.what());
  } catch (const IoError& e) {
    throw CheckpointIncompatibleError(std::string("checkpoint tensor ") + name + ": " + e.what());
  }
  std::vector<std::size_t> dims(a.dims.begin(), a.dims.end());
  if (dims != into.dims())
    throw CheckpointIncompatibleError("checkpoint tensor " + name + " has shape " + Tensor<float>(dims).shape_string() +
                                      ", network expects " + into.shape_string());
  std::copy(a.data.begin(), a.data.end(), into.data());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw CheckpointIncompatibleError("missing checkpoint manifest " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    throw CheckpointIncompatibleError(path.string() + ": " + e.what());
  }
}

}  // namespace

void save_checkpoint(const NetworkState& state, const TrainConfig& cfg, const std::filesystem::path& dir,
                     bool with_optimizer) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  // parameters()/buffers() hand out mutable views; nothing is modified here.
  auto& net = const_cast<DenseUNet<float>&>(state.net);
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["arch"] = json::parse(to_json_string(net.arch()));
  j["task"] = datagen::to_string(net.task());
  j["epoch"] = state.epoch;
  j["schedule_position"] = cfg.phase_at(state.epoch == 0 ? 0 : state.epoch - 1);
  j["train_config"] = json::parse(to_json_string(cfg));
  j["loss_log"] = json::array();
  for (const auto& e : state.log) j["loss_log"].push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"mean_loss", e.mean_loss}});
  j["parameters"] = json::array();
  for (const auto& p : net.parameters()) {
    save_tensor(dir / (p.name + ".spkt"), *p.value);
    j["parameters"].push_back({{"name", p.name}, {"file", p.name + ".spkt"}, {"dims", p.value->dims()}});
  }
  j["buffers"] = json::array();
  for (const auto& b : net.buffers()) {
    save_tensor(dir / (b.name + ".spkt"), *b.value);
    j["buffers"].push_back({{"name", b.name}, {"file", b.name + ".spkt"}, {"dims", b.value->dims()}});
  }
  const auto params = net.parameters();
  if (with_optimizer && state.adam.size() == params.size()) {
    fs::create_directories(dir / "optimizer");
    json opt = {{"t", state.adam.empty() ? 0 : state.adam.front().t}, {"beta1", 0.9}, {"beta2", 0.999}, {"epsilon", 1e-8}};
    opt["moments"] = json::array();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::string base = "optimizer/" + params[i].name;
      save_tensor(dir / (base + ".m.spkt"), state.adam[i].m);
      save_tensor(dir / (base + ".v.spkt"), state.adam[i].v);
      opt["moments"].push_back({{"name", params[i].name}, {"m", base + ".m.spkt"}, {"v", base + ".v.spkt"}});
    }
    j["optimizer"] = opt;
  } else {
    j["optimizer"] = nullptr;
  }
  std::ofstream f(dir / "manifest.json", std::ios::trunc);
  if (!f) throw IoError("cannot write " + (dir / "manifest.json").string());
  f << j.dump(1) << '\n';
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  const json j = read_json(dir / "manifest.json");
  try {
    if (j.value("format", std::string()) != kFormat)
      throw CheckpointIncompatibleError(dir.string() + ": not a specklenet checkpoint");
    if (j.value("version", 0) != kVersion)
      throw CheckpointIncompatibleError(dir.string() + ": unsupported checkpoint version " +
                                        std::to_string(j.value("version", 0)));
    const ArchSpec arch = arch_from_json(j.at("arch").dump());
    try {
      arch.validate();
    } catch (const ConfigError& e) {
      throw CheckpointIncompatibleError(dir.string() + ": " + e.what());
    }
    LoadedCheckpoint out{NetworkState(DenseUNet<float>(arch, datagen::parse_task(j.at("task").get<std::string>()), 0)),
                         train_config_from_json(j.at("train_config").dump())};
    auto& state = out.state;
    state.epoch = j.at("epoch").get<std::size_t>();
    for (const auto& e : j.at("loss_log"))
      state.log.push_back({e.at("epoch").get<std::size_t>(), e.at("lr").get<double>(), e.at("mean_loss").get<double>()});
    auto params = state.net.parameters();
    if (j.at("parameters").size() != params.size())
      throw CheckpointIncompatibleError(dir.string() + ": parameter count does not match the architecture");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& e = j.at("parameters")[i];
      if (e.at("name").get<std::string>() != params[i].name)
        throw CheckpointIncompatibleError(dir.string() + ": unexpected parameter " + e.at("name").get<std::string>());
      load_tensor(dir / e.at("file").get<std::string>(), *params[i].value, params[i].name);
    }
    auto bufs = state.net.buffers();
    if (j.at("buffers").size() != bufs.size())
      throw CheckpointIncompatibleError(dir.string() + ": buffer count does not match the architecture");
    for (std::size_t i = 0; i < bufs.size(); ++i)
      load_tensor(dir / j.at("buffers")[i].at("file").get<std::string>(), *bufs[i].value, bufs[i].name);
    if (!j.at("optimizer").is_null()) {
      const auto& opt = j.at("optimizer");
      const auto t = opt.at("t").get<std::uint64_t>();
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto s = nn::AdamState<float>::like(*params[i].value);
        s.t = t;
        const auto& e = opt.at("moments").at(i);
        load_tensor(dir / e.at("m").get<std::string>(), s.m, params[i].name + ".m");
        load_tensor(dir / e.at("v").get<std::string>(), s.v, params[i].name + ".v");
        state.adam.push_back(std::move(s));
      }
    }
    return out;
  } catch (const json::exception& e) {
    throw CheckpointIncompatibleError(dir.string() + ": malformed manifest: " + e.what());
  }
}

std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) return std::nullopt;
  std::optional<fs::path> best;
  std::size_t best_epoch = 0;
  for (const auto& e : fs::directory_iterator(root)) {
    const auto m = e.path() / "manifest.json";
    if (!e.is_directory() || !fs::exists(m)) continue;
    std::size_t epoch = 0;
    try {
      epoch = read_json(m).value("epoch", std::size_t{0});
    } catch (const Error&) {
      continue;
    }
    if (!best || epoch > best_epoch || (epoch == best_epoch && e.path() < *best)) {
      best = e.path();
      best_epoch = epoch;
    }
  }
  return best;
}

}  // namespace specklenet::model
