#include "specklenet/model/trainer.hpp"

#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "specklenet/error.hpp"
#include "specklenet/model/checkpoint.hpp"
#include "specklenet/nn/loss.hpp"
#include "specklenet/rng.hpp"

namespace specklenet::model {

using json = nlohmann::json;
using nn::Tensor;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2 (batch-norm needs two samples)");
  if (lr_schedule.empty() || lr_schedule.front().first != 0)
    throw ConfigError("train: lr schedule must start at epoch 0");
  for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
    if (!(lr_schedule[i].second > 0.0)) throw ConfigError("train: learning rates must be positive");
    if (i > 0 && lr_schedule[i].first <= lr_schedule[i - 1].first)
      throw ConfigError("train: schedule epochs must be strictly increasing");
  }
}

std::size_t TrainConfig::phase_at(std::size_t epoch) const {
  std::size_t k = 0;
  for (std::size_t i = 0; i < lr_schedule.size(); ++i)
    if (lr_schedule[i].first <= epoch) k = i;
  return k;
}

double TrainConfig::lr_at(std::size_t epoch) const { return lr_schedule.at(phase_at(epoch)).second; }

std::string to_json_string(const TrainConfig& c) {
  json sched = json::array();
  for (const auto& [e, lr] : c.lr_schedule) sched.push_back({e, lr});
  return json{{"epochs", c.epochs}, {"lr_schedule", sched}, {"batch_size", c.batch_size}, {"seed", c.seed}}.dump();
}

TrainConfig train_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("lr_schedule")) {
    c.lr_schedule.clear();
    for (const auto& p : j.at("lr_schedule")) c.lr_schedule.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<double>());
  }
  return c;
}

std::pair<Tensor<float>, Tensor<float>> make_batch(const std::vector<datagen::Sample>& samples,
                                                   const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw InvalidInputError("make_batch: empty batch");
  const auto& first = samples.at(indices.front());
  const std::size_t h = first.input.dim(1), w = first.input.dim(2);
  Tensor<float> x(indices.size(), 1, h, w);
  Tensor<float> y(indices.size(), 2, h, w);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& s = samples.at(indices[k]);
    if (s.input.dims() != first.input.dims() || s.target.dims() != first.target.dims())
      throw ShapeError("make_batch: samples differ in shape");
    std::copy(s.input.values().begin(), s.input.values().end(), x.data() + k * h * w);
    std::copy(s.target.values().begin(), s.target.values().end(), y.data() + k * 2 * h * w);
  }
  return {std::move(x), std::move(y)};
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "shuffle", epoch));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size)
    batches.emplace_back(order.begin() + static_cast<long>(i),
                         order.begin() + static_cast<long>(std::min(n, i + batch_size)));
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

void train(NetworkState& state, const std::vector<datagen::Sample>& samples, const TrainConfig& cfg,
           const TrainOptions& options) {
  cfg.validate();
  if (samples.size() < 2) throw ConfigError("train: need at least two training samples, got " + std::to_string(samples.size()));
  auto params = state.net.parameters();
  if (state.adam.size() != params.size()) {
    state.adam.clear();
    for (const auto& p : params) state.adam.push_back(nn::AdamState<float>::like(*p.value));
  }
  auto checkpoint = [&](const std::string& name) {
    if (options.checkpoint_dir) save_checkpoint(state, cfg, *options.checkpoint_dir / name);
  };
  while (state.epoch < cfg.epochs) {
    if (options.stop_after && state.epoch >= *options.stop_after) return;
    const std::size_t epoch = state.epoch;
    const double lr = cfg.lr_at(epoch);
    double total = 0.0;
    for (const auto& batch : epoch_batches(samples.size(), cfg.batch_size, cfg.seed, epoch)) {
      auto [x, y] = make_batch(samples, batch);
      state.net.zero_grad();
      const Tensor<float> prob = state.net.forward_train(x);
      const auto loss = nn::cross_entropy_loss(prob, y);
      if (!std::isfinite(loss.loss)) throw Error("train: non-finite loss at epoch " + std::to_string(epoch));
      state.net.backward(loss.grad);
      for (std::size_t i = 0; i < params.size(); ++i) nn::adam_step(*params[i].value, *params[i].grad, state.adam[i], lr);
      total += loss.loss * static_cast<double>(batch.size());
    }
    const EpochLog entry{epoch, lr, total / static_cast<double>(samples.size())};
    state.log.push_back(entry);
    state.epoch = epoch + 1;
    if (options.on_epoch) options.on_epoch(entry);
    if (state.epoch < cfg.epochs && cfg.phase_at(state.epoch) != cfg.phase_at(epoch)) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch-%04zu", state.epoch);
      checkpoint(name);
    }
  }
  checkpoint("final");
}

}  // namespace specklenet::model
