// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace n2n::audio {

constexpr int kDefaultSampleRate = 16000;

// Mono signal. Amplitudes are nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Throws ConfigError if the rate is not positive or a sample is not finite.
void validate(const Waveform& w);

enum class WavEncoding { kPcm16, kFloat32 };

// Reads a mono RIFF/WAVE file (PCM16 or IEEE float32). PCM16 codes are
// divided by 32768. Multi-channel and other encodings are rejected with
// UnsupportedError; broken headers with FormatError.
Waveform read_wav(const std::filesystem::path& path);

// Writes a mono WAV. PCM16 clamps to [-1, 1 - 1/32768] and rounds to the
// nearest code. Returns the number of samples that had to be clamped
// (always 0 for float32).
std::size_t write_wav(const Waveform& w, const std::filesystem::path& path,
                      WavEncoding encoding = WavEncoding::kFloat32);

// Linear interpolation resampler. Output length is
// round(n * target_rate / sample_rate) (at least 1). Not band-limited.
Waveform resample_linear(const Waveform& w, int target_rate);

// Band-limited rational resampler: Kaiser-windowed sinc low-pass applied
// polyphase, with the same filter design and delay compensation as Octave's
// resample(). Used where aliasing matters (intelligibility analysis).
Waveform resample_polyphase(const Waveform& w, int target_rate);

}  // namespace n2n::audio
