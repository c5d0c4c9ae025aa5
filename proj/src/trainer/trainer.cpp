// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#include "n2n/trainer.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "n2n/error.h"
#include "n2n/objective.h"
#include "n2n/rng.h"

namespace n2n::trainer {

namespace fs = std::filesystem;

template <typename T>
void adam_step(const std::vector<cx::Var<T>*>& params, AdamState<T>& st, const AdamConfig& cfg) {
  if (st.m.size() != params.size()) {
    st.m.resize(params.size());
    st.v.resize(params.size());
  }
  ++st.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& var = *params[p];
    auto& w = var.mutable_value().data;
    auto& m = st.m[p];
    auto& v = st.v[p];
    if (m.empty()) {
      m.assign(w.size(), T(0));
      v.assign(w.size(), T(0));
    }
    if (m.size() != w.size()) throw ConfigError("adam_step: moment shape does not match parameter");
    const auto g = var.grad();
    const bool has = !g.empty();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = has ? static_cast<double>(g[i]) : 0.0;
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double step = cfg.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps);
      w[i] = static_cast<T>(static_cast<double>(w[i]) - step);
    }
  }
}

template void adam_step<float>(const std::vector<cx::Var<float>*>&, AdamState<float>&, const AdamConfig&);
template void adam_step<double>(const std::vector<cx::Var<double>*>&, AdamState<double>&, const AdamConfig&);

void TrainConfig::validate() const {
  if (mode == mixgen::Mode::kTest) throw ConfigError("train: mode must be n2n or n2c");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(adam.learning_rate > 0.0) || !std::isfinite(adam.learning_rate)) {
    throw ConfigError("train: learning_rate must be > 0");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("train: adam betas must be in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("train: adam eps must be > 0");
  if (precision != 32 && precision != 64) throw ConfigError("train: precision must be 32 or 64");
  if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
  if (crop < 1) throw ConfigError("train: crop must be >= 1");
  if (max_steps < 0) throw ConfigError("train: max_steps must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"mode", mixgen::to_string(mode)},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"optimizer", "adam"},
          {"learning_rate", adam.learning_rate},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"adam_eps", adam.eps},
          {"seed", seed},
          {"precision", precision},
          {"checkpoint_every", checkpoint_every},
          {"crop", crop},
          {"max_steps", max_steps}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.mode = mixgen::parse_mode(j.at("mode").get<std::string>());
    c.batch_size = j.at("batch_size").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.adam.learning_rate = j.at("learning_rate").get<double>();
    c.adam.beta1 = j.at("beta1").get<double>();
    c.adam.beta2 = j.at("beta2").get<double>();
    c.adam.eps = j.at("adam_eps").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.precision = j.at("precision").get<int>();
    c.checkpoint_every = j.at("checkpoint_every").get<std::int64_t>();
    c.crop = j.at("crop").get<std::int64_t>();
    c.max_steps = j.at("max_steps").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::int64_t steps_per_epoch(std::size_t clips, int batch_size) {
  return (static_cast<std::int64_t>(clips) + batch_size - 1) / batch_size;
}

TrainingSet load_training_set(const mixgen::DatasetManifest& manifest, mixgen::Mode mode) {
  if (manifest.records.empty()) throw ConfigError("train: manifest has no records");
  TrainingSet set;
  for (const auto& r : manifest.records) {
    if (r.mode != mode) {
      throw ConfigError("train: record " + r.pair_id + " has mode " + mixgen::to_string(r.mode) +
                        " but training mode is " + mixgen::to_string(mode));
    }
    auto in = audio::read_wav(r.input_path);
    auto tg = audio::read_wav(r.target_path);
    if (in.size() != tg.size() || in.sample_rate != tg.sample_rate) {
      throw FormatError("train: input and target of " + r.pair_id + " differ in length or rate");
    }
    if (set.sample_rate == 0) set.sample_rate = in.sample_rate;
    if (in.sample_rate != set.sample_rate) throw FormatError("train: mixed sample rates in manifest");
    set.ids.push_back(r.pair_id);
    set.inputs.push_back(std::move(in.samples));
    set.targets.push_back(std::move(tg.samples));
  }
  return set;
}

template <typename T>
Trainee<T> init_trainee(const dcunet::ArchitectureSpec& arch, const spectral::StftConfig& stft,
                        const TrainConfig& cfg) {
  cfg.validate();
  stft.validate();
  if (stft.bins() != arch.freq_bins) {
    throw ConfigError("train: architecture expects " + std::to_string(arch.freq_bins) + " bins, STFT gives " +
                      std::to_string(stft.bins()));
  }
  if ((sizeof(T) == 4) != (cfg.precision == 32)) throw ConfigError("train: precision does not match element type");
  Trainee<T> t;
  t.params = std::make_unique<dcunet::ModelParameters<T>>(arch, derive_seed(cfg.seed, {0}));
  t.stft = stft;
  t.config = cfg;
  return t;
}

namespace {

enum Stream : std::uint64_t { kShuffle = 1, kCrop = 2 };

std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {kShuffle, static_cast<std::uint64_t>(epoch)}));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

template <typename T>
std::vector<cx::Var<T>*> param_ptrs(dcunet::ModelParameters<T>& p) {
  std::vector<cx::Var<T>*> out;
  for (auto& nv : p.parameters()) out.push_back(nv.var);
  return out;
}

}  // namespace

template <typename T>
void train(Trainee<T>& t, const TrainingSet& data, const TrainHooks& hooks) {
  const auto& cfg = t.config;
  cfg.validate();
  if (data.inputs.empty()) throw ConfigError("train: empty training set");
  std::size_t shortest = data.inputs[0].size();
  for (const auto& x : data.inputs) shortest = std::min(shortest, x.size());
  const auto crop = static_cast<std::size_t>(std::min<std::int64_t>(cfg.crop, static_cast<std::int64_t>(shortest)));
  if (crop < static_cast<std::size_t>(t.stft.hop)) throw ConfigError("train: clips shorter than one STFT hop");

  const auto n = data.inputs.size();
  const std::int64_t per_epoch = steps_per_epoch(n, cfg.batch_size);
  std::int64_t total = per_epoch * cfg.epochs;
  if (cfg.max_steps > 0) total = std::min(total, cfg.max_steps);

  auto engine = std::make_shared<spectral::StftEngine>(t.stft, crop);
  const auto bins = engine->bins(), frames = engine->frames();
  const auto plane = static_cast<std::int64_t>(engine->plane_size());
  auto params = param_ptrs(*t.params);
  std::vector<double> re(plane), im(plane);

  while (t.state.step < total) {
    const int epoch = static_cast<int>(t.state.step / per_epoch);
    const std::int64_t in_epoch = t.state.step % per_epoch;
    if (in_epoch == 0) t.state.running_loss = 0.0;
    const auto order = epoch_order(cfg.seed, epoch, n);
    const std::size_t first = static_cast<std::size_t>(in_epoch) * cfg.batch_size;
    const std::size_t count = std::min<std::size_t>(cfg.batch_size, n - first);

    const auto b = static_cast<std::int64_t>(count), len = static_cast<std::int64_t>(crop);
    cx::Tensor<T> x({b, len}), y({b, len}), spec({b, 2, bins, frames});
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t idx = order[first + k];
      Rng rng(derive_seed(cfg.seed, {kCrop, static_cast<std::uint64_t>(epoch), idx}));
      const std::size_t off = rng.index(data.inputs[idx].size() - crop + 1);
      std::vector<double> seg(data.inputs[idx].begin() + off, data.inputs[idx].begin() + off + crop);
      for (std::size_t i = 0; i < crop; ++i) {
        x.data[k * crop + i] = static_cast<T>(seg[i]);
        y.data[k * crop + i] = static_cast<T>(data.targets[idx][off + i]);
      }
      engine->forward(seg, re, im);
      T* dst = spec.data.data() + static_cast<std::int64_t>(k) * 2 * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        dst[i] = static_cast<T>(re[i]);
        dst[plane + i] = static_cast<T>(im[i]);
      }
    }

    const cx::ComplexTensor<T> input{cx::Var<T>::leaf(std::move(spec))};
    const auto logits = dcunet::forward(input, *t.params, true);
    const auto masked = dcunet::apply_mask(dcunet::estimate_mask(logits), input);
    const auto estimate = cx::istft(masked, engine);
    auto loss = objective::wsdr_loss(estimate, x, y);
    const double value = static_cast<double>(loss.value().data[0]);

    const LossPoint point{t.state.step + 1, epoch, value};
    if (!std::isfinite(value)) {
      if (!hooks.diagnostic_path.empty()) save_checkpoint(hooks.diagnostic_path, t);
      throw Error("train: non-finite loss at step " + std::to_string(point.step) +
                  (hooks.diagnostic_path.empty() ? "" : "; state saved to " + hooks.diagnostic_path.string()));
    }
    cx::backward(loss);
    adam_step(params, t.adam, cfg.adam);
    for (auto* p : params) p->zero_grad();

    t.state.step = point.step;
    t.state.epoch = static_cast<int>(t.state.step / per_epoch);
    t.state.running_loss += (value - t.state.running_loss) / static_cast<double>(in_epoch + 1);
    t.state.curve.push_back(point);
    if (hooks.on_step) hooks.on_step(point);
    if (cfg.checkpoint_every > 0 && !hooks.checkpoint_path.empty() && t.state.step % cfg.checkpoint_every == 0) {
      save_checkpoint(hooks.checkpoint_path, t);
    }
  }
}

template <typename T>
void save_checkpoint(const fs::path& path, Trainee<T>& t) {
  checkpoint::Container c;
  c.meta["kind"] = "train";
  dcunet::export_to(c, *t.params, t.stft);
  const auto dtype = sizeof(T) == 4 ? checkpoint::Dtype::kFloat32 : checkpoint::Dtype::kFloat64;
  const auto named = t.params->parameters();
  for (std::size_t i = 0; i < named.size() && i < t.adam.m.size(); ++i) {
    const auto& shape = named[i].var->shape();
    c.tensors.push_back({"adam.m/" + named[i].name, shape, dtype, {t.adam.m[i].begin(), t.adam.m[i].end()}});
    c.tensors.push_back({"adam.v/" + named[i].name, shape, dtype, {t.adam.v[i].begin(), t.adam.v[i].end()}});
  }
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : t.state.curve) curve.push_back({p.step, p.epoch, p.loss});
  c.meta["train"] = {{"config", t.config.to_json()},
                     {"step", t.state.step},
                     {"epoch", t.state.epoch},
                     {"running_loss", t.state.running_loss},
                     {"adam_t", t.adam.t},
                     {"curve", curve}};
  checkpoint::save(path, c);
}

int checkpoint_precision(const fs::path& path) {
  const auto c = checkpoint::load(path);
  return c.meta.value("precision", 32);
}

template <typename T>
Trainee<T> load_checkpoint(const fs::path& path) {
  const auto c = checkpoint::load(path);
  if (c.meta.value("kind", "") != "train" || !c.meta.contains("train")) {
    throw FormatError(path.string() + " is not a training checkpoint");
  }
  if (c.meta.value("precision", 0) != (sizeof(T) == 4 ? 32 : 64)) {
    throw ConfigError(path.string() + " was written at a different precision");
  }
  Trainee<T> t;
  t.params = std::make_unique<dcunet::ModelParameters<T>>(dcunet::ArchitectureSpec::from_json(c.meta["arch"]), 0);
  t.stft = dcunet::stft_from_json(c.meta["stft"]);
  dcunet::import_from(c, *t.params);
  const auto& tr = c.meta["train"];
  try {
    t.config = TrainConfig::from_json(tr.at("config"));
    t.state.step = tr.at("step").get<std::int64_t>();
    t.state.epoch = tr.at("epoch").get<int>();
    t.state.running_loss = tr.at("running_loss").get<double>();
    t.adam.t = tr.at("adam_t").get<std::int64_t>();
    for (const auto& p : tr.at("curve")) {
      t.state.curve.push_back({p.at(0).get<std::int64_t>(), p.at(1).get<int>(), p.at(2).get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad training state: " + e.what());
  }
  if (t.adam.t > 0) {
    for (const auto& nv : t.params->parameters()) {
      const auto& m = c.at("adam.m/" + nv.name);
      const auto& v = c.at("adam.v/" + nv.name);
      if (m.shape != nv.var->shape() || v.shape != nv.var->shape()) {
        throw FormatError(path.string() + ": optimizer state shape mismatch for " + nv.name);
      }
      t.adam.m.emplace_back(m.values.begin(), m.values.end());
      t.adam.v.emplace_back(v.values.begin(), v.values.end());
    }
  }
  return t;
}

void write_loss_csv(const std::vector<LossPoint>& curve, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,epoch,loss\n";
  char buf[64];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof(buf), "%.17g", p.loss);
    out << p.step << ',' << p.epoch << ',' << buf << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

#define N2N_INSTANTIATE(T)                                                                                     \
  template Trainee<T> init_trainee<T>(const dcunet::ArchitectureSpec&, const spectral::StftConfig&,           \
                                      const TrainConfig&);                                                     \
  template void train<T>(Trainee<T>&, const TrainingSet&, const TrainHooks&);                                  \
  template void save_checkpoint<T>(const fs::path&, Trainee<T>&);                                              \
  template Trainee<T> load_checkpoint<T>(const fs::path&);

N2N_INSTANTIATE(float)
N2N_INSTANTIATE(double)
#undef N2N_INSTANTIATE

}  // namespace n2n::trainer
