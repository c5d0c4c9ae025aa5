// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#include <cmath>

#include "doctest.h"
#include "n2n/error.h"
#include "n2n/trainer.h"
#include "support.h"

using namespace n2n;
using cx::Tensor;
using cx::Var;
using trainer::TrainConfig;

namespace {

dcunet::ArchitectureSpec small_spec() {
  dcunet::ArchitectureSpec s;
  s.freq_bins = 65;
  s.encoder = {{{3, 3}, {2, 2}, 4}, {{3, 3}, {2, 1}, 4}};
  return s;
}

const spectral::StftConfig kSmallStft{128, 32};

// Noisy speech clips; targets are independent noisy copies, or the inputs
// themselves when `identity` is set.
trainer::TrainingSet toy_set(int clips, double seconds, bool identity, std::uint64_t seed) {
  trainer::TrainingSet d;
  d.sample_rate = 16000;
  Rng rng(seed);
  for (int i = 0; i < clips; ++i) {
    auto clean = mixgen::synth_speech(seconds, 16000, rng);
    auto in = clean.samples, tg = clean.samples;
    for (auto& v : in) v += 0.05 * rng.normal();
    for (auto& v : tg) v += 0.05 * rng.normal();
    d.ids.push_back("c" + std::to_string(i));
    d.inputs.push_back(in);
    d.targets.push_back(identity ? in : tg);
  }
  return d;
}

TrainConfig small_config(std::int64_t steps) {
  TrainConfig c;
  c.precision = 64;
  c.seed = 11;
  c.crop = 1024;
  c.max_steps = steps;
  c.epochs = 100;
  return c;
}

std::vector<double> flat_params(dcunet::ModelParameters<double>& p) {
  std::vector<double> out;
  for (auto& np : p.parameters()) out.insert(out.end(), np.var->value().data.begin(), np.var->value().data.end());
  for (auto& nb : p.buffers()) out.insert(out.end(), nb.tensor->data.begin(), nb.tensor->data.end());
  return out;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("adam first step has magnitude lr") {
  auto p = Var<double>::leaf(Tensor<double>({1}, 1.0), true);
  trainer::AdamState<double> st;
  trainer::AdamConfig cfg;
  p.node()->grad = {5.0};
  trainer::adam_step<double>({&p}, st, cfg);
  CHECK(p.value().data[0] == doctest::Approx(1.0 - cfg.learning_rate).epsilon(1e-9));
  CHECK(st.t == 1);
  p.node()->grad = {-0.01};
  trainer::adam_step<double>({&p}, st, cfg);
  CHECK(st.t == 2);
}

TEST_CASE("zero gradients leave parameters unchanged") {
  auto p = Var<double>::leaf(Tensor<double>({3}, 0.5), true);
  trainer::AdamState<double> st;
  for (int i = 0; i < 5; ++i) {
    p.node()->grad = {0.0, 0.0, 0.0};
    trainer::adam_step<double>({&p}, st, {});
  }
  CHECK(p.value().data == std::vector<double>{0.5, 0.5, 0.5});
  auto q = Var<double>::leaf(Tensor<double>({2}, 0.25), true);
  trainer::AdamState<double> fresh;
  trainer::adam_step<double>({&q}, fresh, {});
  CHECK(q.value().data == std::vector<double>{0.25, 0.25});
}

TEST_CASE("adam minimizes a quadratic bowl") {
  auto p = Var<double>::leaf(Tensor<double>({1}, 1.0), true);
  trainer::AdamState<double> st;
  trainer::AdamConfig cfg;
  cfg.learning_rate = 0.01;
  for (int i = 0; i < 500; ++i) {
    cx::backward(cx::ops::mul(p, p));
    trainer::adam_step<double>({&p}, st, cfg);
    p.zero_grad();
  }
  CHECK(std::abs(p.value().data[0]) < 0.01);
}

TEST_CASE("config defaults and validation") {
  TrainConfig c;
  CHECK(c.batch_size == 2);
  CHECK(c.epochs == 4);
  CHECK(c.adam.learning_rate == 1e-3);
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.adam.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.mode = mixgen::Mode::kTest;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  c.seed = 123456789012345ULL;
  c.max_steps = 17;
  CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK(trainer::steps_per_epoch(5, 2) == 3);
}

TEST_CASE("same seed, same loss curve") {
  auto data = toy_set(6, 0.25, false, 1);
  auto a = trainer::init_trainee<double>(small_spec(), kSmallStft, small_config(6));
  auto b = trainer::init_trainee<double>(small_spec(), kSmallStft, small_config(6));
  trainer::train(a, data);
  trainer::train(b, data);
  REQUIRE(a.state.curve.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(a.state.curve[i].loss == b.state.curve[i].loss);
    CHECK(a.state.curve[i].loss >= -1.0);
    CHECK(a.state.curve[i].loss <= 1.0);
    CHECK(a.state.curve[i].step == static_cast<std::int64_t>(i + 1));
  }
  CHECK(a.state.curve[3].epoch == 1);
  CHECK(flat_params(*a.params) == flat_params(*b.params));
}

TEST_CASE("resuming mid-epoch reproduces the uninterrupted run") {
  testing::TempDir dir("trainer");
  auto data = toy_set(6, 0.25, false, 2);
  auto full = trainer::init_trainee<double>(small_spec(), kSmallStft, small_config(7));
  trainer::train(full, data);

  auto part = trainer::init_trainee<double>(small_spec(), kSmallStft, small_config(4));
  trainer::train(part, data);
  trainer::save_checkpoint(dir / "mid.ckpt", part);
  CHECK(trainer::checkpoint_precision(dir / "mid.ckpt") == 64);
  auto resumed = trainer::load_checkpoint<double>(dir / "mid.ckpt");
  CHECK(flat_params(*resumed.params) == flat_params(*part.params));
  CHECK(resumed.adam.t == part.adam.t);
  CHECK(resumed.adam.m == part.adam.m);
  CHECK(resumed.state.curve.size() == 4);
  resumed.config.max_steps = 7;
  trainer::train(resumed, data);
  REQUIRE(resumed.state.curve.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) CHECK(resumed.state.curve[i].loss == full.state.curve[i].loss);
  CHECK(flat_params(*resumed.params) == flat_params(*full.params));
  CHECK_THROWS_AS(trainer::load_checkpoint<float>(dir / "mid.ckpt"), ConfigError);

  // The training checkpoint also serves as a model file.
  auto model = dcunet::load_model<double>(dir / "mid.ckpt");
  CHECK(model.params->parameters()[0].var->value().data == part.params->parameters()[0].var->value().data);
}

TEST_CASE("identity targets are learned") {
  auto data = toy_set(50, 0.25, true, 3);
  auto cfg = small_config(500);
  cfg.mode = mixgen::Mode::kN2C;
  cfg.precision = 32;
  cfg.adam.learning_rate = 1e-2;
  auto t = trainer::init_trainee<float>(small_spec(), kSmallStft, cfg);
  double best = 1.0, window = 0.0;
  trainer::TrainHooks hooks;
  std::vector<double> recent;
  hooks.on_step = [&](const trainer::LossPoint& p) {
    recent.push_back(p.loss);
    if (recent.size() > 10) recent.erase(recent.begin());
    window = 0.0;
    for (double v : recent) window += v / static_cast<double>(recent.size());
    if (recent.size() == 10) best = std::min(best, window);
  };
  trainer::train(t, data, hooks);
  CHECK(best < -0.95);
}

TEST_CASE("non-finite loss stops training with a diagnostic checkpoint") {
  testing::TempDir dir("trainer");
  auto data = toy_set(2, 0.25, false, 4);
  auto t = trainer::init_trainee<double>(small_spec(), kSmallStft, small_config(3));
  t.params->decoder_convs().back().weights.b_real.mutable_value().data[0] = NAN;
  trainer::TrainHooks hooks;
  hooks.diagnostic_path = dir / "diag.ckpt";
  CHECK_THROWS_AS(trainer::train(t, data, hooks), Error);
  CHECK(std::filesystem::exists(dir / "diag.ckpt"));
  CHECK(t.state.step == 0);
}

TEST_CASE("noise2noise training never reads clean files") {
  testing::TempDir dir("trainer");
  testing::write_noise_tree(dir / "noise", 16000, 3);
  auto bank = mixgen::NoiseBank::scan(dir / "noise");
  mixgen::write_synth_corpus(dir / "speech", 4, 0.25, 16000, 5);
  auto m = mixgen::generate_dataset(dir / "speech", bank, mixgen::Mode::kN2N, 4, dir / "set", 6);
  std::filesystem::remove_all(dir / "set" / "clean");
  auto manifest = mixgen::read_manifest(dir / "set" / mixgen::kManifestName);
  auto data = trainer::load_training_set(manifest, mixgen::Mode::kN2N);
  CHECK(data.inputs.size() == 4);
  auto t = trainer::init_trainee<double>(small_spec(), kSmallStft, small_config(2));
  CHECK_NOTHROW(trainer::train(t, data));
  CHECK_THROWS_AS(trainer::load_training_set(manifest, mixgen::Mode::kN2C), ConfigError);
}

TEST_CASE("loss csv") {
  testing::TempDir dir("trainer");
  trainer::write_loss_csv({{1, 0, -0.5}, {2, 0, -0.25}}, dir / "loss.csv");
  CHECK(testing::read_bytes(dir / "loss.csv") == "step,epoch,loss\n1,0,-0.5\n2,0,-0.25\n");
}

TEST_CASE("architecture and transform must agree") {
  CHECK_THROWS_AS(trainer::init_trainee<double>(small_spec(), spectral::StftConfig::desk(), small_config(1)),
                  ConfigError);
  auto cfg = small_config(1);
  CHECK_THROWS_AS(trainer::init_trainee<float>(small_spec(), kSmallStft, cfg), ConfigError);
}

}
