// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "n2n/audio.h"
#include "n2n/mixgen.h"

namespace n2n::metrics {

using audio::Waveform;

inline constexpr double kSnrCapDb = 99.0;

// 10 log10(sum c^2 / sum (c - e)^2), capped at kSnrCapDb.
double snr_metric(std::span<const double> clean, std::span<const double> estimate);
double snr_metric(const Waveform& clean, const Waveform& estimate);

struct SsnrOptions {
  double frame_ms = 32.0;
  double hop_ms = 16.0;
  double floor_db = -10.0;
  double ceil_db = 35.0;
};

// Mean of per-frame SNRs clamped to [floor, ceil] over all full frames.
// A frame with zero error scores ceil; one with zero clean energy and
// nonzero error scores floor.
double ssnr_metric(const Waveform& clean, const Waveform& estimate, const SsnrOptions& opts = {});

// Short-time objective intelligibility, numerically following the widely
// used pystoi implementation: 10 kHz resampling, 40 dB silent-frame removal,
// 256-sample frames, 15 third-octave bands from 150 Hz, 30-frame segments,
// -15 dB clipping. Throws if clean is silent or fewer than 30 frames remain.
double stoi_metric(const Waveform& clean, const Waveform& estimate);
double stoi_metric(std::span<const double> clean, std::span<const double> estimate, int sample_rate);

struct FileMetrics {
  std::string pair_id;
  std::string category;
  double snr_db = 0.0;
  double ssnr_db = 0.0;
  double stoi = 0.0;
  std::optional<double> pesq_nb;
  std::optional<double> pesq_wb;
};

// Population statistics (divide by n).
struct Aggregate {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};
Aggregate aggregate(std::span<const double> values);

struct ConditionResult {
  std::string name;  // "Baseline", "N2C", "N2N", ...
  std::vector<FileMetrics> rows;  // sorted by pair_id

  // Keys "snr_db", "ssnr_db", "stoi", "pesq_nb", "pesq_wb"; category "" = all.
  std::optional<Aggregate> summary(const std::string& metric, const std::string& category = "") const;
  std::vector<std::string> categories() const;
};

struct MetricReport {
  std::vector<ConditionResult> conditions;

  ConditionResult* find(const std::string& name);
  const ConditionResult* find(const std::string& name) const;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  // One row per (condition, file).
  std::string to_csv() const;
  // Metric -> mean ± std per condition, one block per category plus "all".
  std::string to_table() const;

  // Reads CSV {pair_id, pesq_nb, pesq_wb} (header required, optional
  // leading "condition" column) and attaches values to matching rows.
  // Rows without a condition column go to `default_condition`.
  void import_pesq_csv(const std::filesystem::path& path, const std::string& default_condition);
};

// Re-derives every aggregate in j from its rows; returns false on mismatch.
bool aggregates_consistent(const nlohmann::json& j, double tol = 1e-9);

using Enhancer = std::function<Waveform(const Waveform&)>;

// estimate = input when enhancer is empty (the Baseline condition).
ConditionResult evaluate_testset(const mixgen::DatasetManifest& manifest, const std::string& condition,
                                 const Enhancer& enhancer = {});

}  // namespace n2n::metrics
