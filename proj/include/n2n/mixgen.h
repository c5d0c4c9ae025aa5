// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "n2n/audio.h"
#include "n2n/rng.h"

namespace n2n::mixgen {

using audio::Waveform;

inline constexpr double kMinSnrDb = 0.0;
inline constexpr double kMaxSnrDb = 10.0;

// Synthetic category backed by Gaussian noise instead of files.
inline const std::string kWhite = "white";
inline const std::string kClean = "clean";
inline const std::string kRandom = "random";

enum class Mode { kN2N, kN2C, kTest };

Mode parse_mode(const std::string& s);
std::string to_string(Mode m);

// Category id -> noise files. Loaded clips are cached, so a bank must not
// be shared between threads while drawing.
class NoiseBank {
 public:
  NoiseBank() = default;

  // Scans dir recursively for .wav files. Files named like UrbanSound8K
  // clips (fsID-classID-occurrence-slice.wav) are filed under their class
  // name; any other file under the name of its top-level subdirectory.
  static NoiseBank scan(const std::filesystem::path& dir);
  // A bank with only the synthetic white category.
  static NoiseBank white_only();

  void add(const std::string& category, const std::filesystem::path& file);
  void add_white();

  std::vector<std::string> categories() const;
  bool has(const std::string& category) const;
  std::size_t size() const { return files_.size() + (white_ ? 1 : 0); }
  void validate() const;

  // Noise of exactly `length` samples at `sample_rate`: a random file of
  // the category, resampled if needed, tiled to length. White draws N(0, 1).
  std::vector<double> draw(const std::string& category, std::size_t length, int sample_rate, Rng& rng);

 private:
  const Waveform& load(const std::filesystem::path& file, int sample_rate);

  std::map<std::string, std::vector<std::filesystem::path>> files_;
  bool white_ = false;
  std::map<std::pair<std::string, int>, Waveform> cache_;
};

// Maps an UrbanSound8K class id (0-9) to its name.
std::string urbansound_class_name(int class_id);

double compute_snr_db(std::span<const double> signal, std::span<const double> noise);
double compute_snr_db(const Waveform& signal, const Waveform& noise);

// g * noise with g chosen so that compute_snr_db(clean, g * noise) == target_db.
std::vector<double> scale_noise_to_snr(std::span<const double> clean, std::span<const double> noise,
                                       double target_db);
Waveform scale_noise_to_snr(const Waveform& clean, const Waveform& noise, double target_db);

// Tiles noise end to end and truncates to length.
std::vector<double> overlay_repeat(std::span<const double> noise, std::size_t length);
Waveform overlay_repeat(const Waveform& clean, const Waveform& noise);

struct TrainingPair {
  Waveform input;
  Waveform target;
  Waveform clean_ref;
  std::string input_category;
  std::string target_category;  // kClean for n2c and test
  double input_snr_db = 0.0;
  std::optional<double> target_snr_db;
  std::uint64_t seed = 0;
};

// input_category may be kRandom. Two white draws in n2n mode are the one
// case where both categories coincide: the realizations are independent.
TrainingPair make_pair(const Waveform& clean, NoiseBank& bank, Mode mode, const std::string& input_category,
                       std::uint64_t seed);

struct ManifestRecord {
  std::string pair_id;
  Mode mode = Mode::kN2N;
  std::filesystem::path input_path;
  std::filesystem::path target_path;
  std::filesystem::path clean_path;
  std::string input_category;
  std::string target_category;
  double input_snr_db = 0.0;
  std::optional<double> target_snr_db;
  std::uint64_t seed = 0;
  bool clipped = false;

  nlohmann::json to_json() const;
  static ManifestRecord from_json(const nlohmann::json& j);
};

// Paths inside a manifest file are relative to the file's directory;
// read_manifest resolves them.
struct DatasetManifest {
  std::vector<ManifestRecord> records;
};

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

inline constexpr const char* kManifestName = "manifest.jsonl";

struct GenerateOptions {
  std::string input_category = kRandom;
  audio::WavEncoding encoding = audio::WavEncoding::kFloat32;
  int sample_rate = 0;  // resample clean clips to this rate; 0 keeps theirs
};

// Pair i uses clean file i mod n (files sorted by path) and seed
// derive_seed(seed, {i}). Writes input/, target/, clean/ and manifest.jsonl.
DatasetManifest generate_dataset(const std::filesystem::path& clean_dir, NoiseBank& bank, Mode mode,
                                 std::size_t count, const std::filesystem::path& out_dir, std::uint64_t seed,
                                 const GenerateOptions& opts = {});

std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir);

// Voiced harmonic signal with a gliding pitch, syllable-rate amplitude
// envelope and short pauses. Peak amplitude about 0.5.
Waveform synth_speech(double seconds, int sample_rate, Rng& rng);

// Writes count clips as clip_XXXXX.wav, each with seed derive_seed(seed, {i}).
std::vector<std::filesystem::path> write_synth_corpus(const std::filesystem::path& dir, std::size_t count,
                                                      double seconds, int sample_rate, std::uint64_t seed);

}  // namespace n2n::mixgen
