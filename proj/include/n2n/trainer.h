// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "n2n/checkpoint.h"
#include "n2n/cx/autograd.h"
#include "n2n/dcunet.h"
#include "n2n/mixgen.h"
#include "n2n/spectral.h"

namespace n2n::trainer {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::int64_t t = 0;
  std::vector<std::vector<T>> m, v;  // one per parameter, lazily sized
};

// One bias-corrected Adam update. A parameter without a gradient is
// treated as having a zero gradient.
template <typename T>
void adam_step(const std::vector<cx::Var<T>*>& params, AdamState<T>& state, const AdamConfig& cfg);

struct TrainConfig {
  mixgen::Mode mode = mixgen::Mode::kN2N;  // kN2N or kN2C
  int batch_size = 2;
  int epochs = 4;
  AdamConfig adam;
  std::uint64_t seed = 0;
  int precision = 32;
  std::int64_t checkpoint_every = 0;  // steps; 0 disables periodic saves
  std::int64_t crop = 16384;          // samples; clipped to the shortest clip
  std::int64_t max_steps = 0;         // 0 = epochs * steps_per_epoch

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct LossPoint {
  std::int64_t step = 0;  // 1-based
  int epoch = 0;          // 0-based
  double loss = 0.0;
};

struct TrainState {
  std::int64_t step = 0;  // completed steps
  int epoch = 0;
  double running_loss = 0.0;  // mean loss over the current epoch so far
  std::vector<LossPoint> curve;
};

template <typename T>
struct Trainee {
  std::unique_ptr<dcunet::ModelParameters<T>> params;
  spectral::StftConfig stft;
  AdamState<T> adam;
  TrainState state;
  TrainConfig config;
};

// Checkpoints hold the model (loadable by dcunet::load_model), the Adam
// moments, counters, config and loss curve.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, Trainee<T>& t);
template <typename T>
Trainee<T> load_checkpoint(const std::filesystem::path& path);

// Reads the precision recorded in a checkpoint.
int checkpoint_precision(const std::filesystem::path& path);

struct TrainHooks {
  std::function<void(const LossPoint&)> on_step;
  // Written when the loss goes non-finite, before train throws.
  std::filesystem::path diagnostic_path;
  // Periodic checkpoints when config.checkpoint_every > 0.
  std::filesystem::path checkpoint_path;
};

// Training clips, loaded once. N2N never touches clean_path.
struct TrainingSet {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> targets;
  int sample_rate = 0;
};
TrainingSet load_training_set(const mixgen::DatasetManifest& manifest, mixgen::Mode mode);

template <typename T>
Trainee<T> init_trainee(const dcunet::ArchitectureSpec& arch, const spectral::StftConfig& stft,
                        const TrainConfig& cfg);

// Runs until epochs * steps_per_epoch (or max_steps) steps have completed,
// continuing from t.state.
template <typename T>
void train(Trainee<T>& t, const TrainingSet& data, const TrainHooks& hooks = {});

std::int64_t steps_per_epoch(std::size_t clips, int batch_size);

void write_loss_csv(const std::vector<LossPoint>& curve, const std::filesystem::path& path);

}  // namespace n2n::trainer
