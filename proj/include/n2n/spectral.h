// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "n2n/audio.h"

namespace n2n::spectral {

enum class Window { kHann };

// Frame geometry of the short-time transform.
//
// Energy convention. Frames are windowed with a periodic Hann window w of
// length fft_size and the one-sided DFT of each frame is scaled by
// 1 / sqrt(fft_size * C), where C = sum_t w(n - t*hop)^2 is the (constant)
// squared-window overlap. With center_pad the signal is zero-padded by
// fft_size - hop on the left, so every sample is covered by the full set of
// overlapping frames, and
//
//     sum_n x[n]^2 == sum_t sum_k c_k * |X[k, t]|^2,   c_0 = c_{N/2} = 1,
//                                                      c_k = 2 otherwise.
//
// energy() evaluates the right-hand side. The inverse is a weighted
// overlap-add divided by C, so istft(stft(x)) == x.
struct StftConfig {
  int fft_size = 512;
  int hop = 128;
  Window window = Window::kHann;
  bool center_pad = true;

  int bins() const { return fft_size / 2 + 1; }

  // Throws ConfigError for odd sizes, hop > fft_size, or a hop for which
  // the squared window does not overlap-add to a constant.
  void validate() const;

  // 512-point FFT, hop 128 (8 ms at 16 kHz).
  static StftConfig desk();
  // 3072-point FFT with a 16 ms hop at the given rate.
  static StftConfig full(int sample_rate);
};

// round(ms * rate / 1000)
int hop_from_ms(double ms, int rate);

// Version string of the FFT backend.
std::string fft_library_version();

// One-sided complex spectrogram stored as two bin-major planes:
// element (f, t) lives at f * frames + t.
struct ComplexSpectrogram {
  int bins = 0;
  int frames = 0;
  std::vector<double> real;
  std::vector<double> imag;
  int fft_size = 0;
  int hop = 0;
  int sample_rate = 0;
  bool center_pad = true;
  std::size_t original_length = 0;

  std::size_t index(int f, int t) const {
    return static_cast<std::size_t>(f) * static_cast<std::size_t>(frames) +
           static_cast<std::size_t>(t);
  }
  StftConfig config() const { return {fft_size, hop, Window::kHann, center_pad}; }
};

// Precomputed transform for one (config, signal length) pair. Owns FFT plans
// and scratch buffers, so a single instance must not be used from two
// threads at once; separate instances are independent.
class StftEngine {
 public:
  StftEngine(const StftConfig& cfg, std::size_t length);
  ~StftEngine();
  StftEngine(StftEngine&&) noexcept;
  StftEngine& operator=(StftEngine&&) noexcept;

  const StftConfig& config() const;
  std::size_t length() const;
  int bins() const;
  int frames() const;
  std::size_t plane_size() const;  // bins * frames

  // x has length() samples; re/im receive bins x frames bin-major planes.
  void forward(std::span<const double> x, std::span<double> re, std::span<double> im) const;
  // Weighted overlap-add back to length() samples.
  void inverse(std::span<const double> re, std::span<const double> im, std::span<double> x) const;
  // Transpose of inverse(): maps a gradient w.r.t. the output samples to
  // gradients w.r.t. the real and imaginary planes.
  void inverse_adjoint(std::span<const double> grad_x, std::span<double> grad_re,
                       std::span<double> grad_im) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

ComplexSpectrogram stft(const audio::Waveform& w, const StftConfig& cfg);
audio::Waveform istft(const ComplexSpectrogram& s);

// Weighted one-sided energy, equal to the time-domain energy of the
// transformed signal (see StftConfig).
double energy(const ComplexSpectrogram& s);

}  // namespace n2n::spectral
