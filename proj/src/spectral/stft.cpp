// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include "n2n/error.h"
#include "n2n/spectral.h"

namespace n2n::spectral {
namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::vector<double> periodic_hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  }
  return w;
}

// Squared-window overlap sum for each phase r in [0, hop).
std::vector<double> overlap_profile(const std::vector<double>& w, int hop) {
  std::vector<double> s(static_cast<std::size_t>(hop), 0.0);
  for (std::size_t n = 0; n < w.size(); ++n) s[n % static_cast<std::size_t>(hop)] += w[n] * w[n];
  return s;
}

}  // namespace

void StftConfig::validate() const {
  if (fft_size < 2 || fft_size % 2 != 0) throw ConfigError("fft_size must be even and >= 2");
  if (hop < 1 || hop > fft_size) throw ConfigError("hop must be in [1, fft_size]");
  const auto profile = overlap_profile(periodic_hann(fft_size), hop);
  const auto [lo, hi] = std::minmax_element(profile.begin(), profile.end());
  if (*lo <= 0.0 || (*hi - *lo) > 1e-9 * *hi) {
    throw ConfigError("hop " + std::to_string(hop) + " does not satisfy constant overlap-add for a " +
                      std::to_string(fft_size) + "-point Hann window");
  }
}

StftConfig StftConfig::desk() { return StftConfig{}; }

StftConfig StftConfig::full(int sample_rate) {
  return StftConfig{3072, hop_from_ms(16.0, sample_rate), Window::kHann, true};
}

int hop_from_ms(double ms, int rate) {
  if (!(ms > 0.0)) throw ConfigError("hop duration must be positive");
  if (rate <= 0) throw ConfigError("sample rate must be positive");
  return static_cast<int>(std::lround(ms * rate / 1000.0));
}

std::string fft_library_version() { return fftw_version; }

struct StftEngine::Impl {
  StftConfig cfg;
  std::size_t length = 0;
  int bins = 0;
  int frames = 0;
  std::size_t left_pad = 0;
  double overlap = 0.0;  // C
  double scale = 0.0;    // 1 / sqrt(N * C)
  std::vector<double> window;
  std::vector<double> inv_norm;  // per output sample, 1 / sum_t w^2 (0 where uncovered)

  double* time_buf = nullptr;
  fftw_complex* freq_buf = nullptr;
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;

  ~Impl() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (r2c) fftw_destroy_plan(r2c);
    if (c2r) fftw_destroy_plan(c2r);
    if (time_buf) fftw_free(time_buf);
    if (freq_buf) fftw_free(freq_buf);
  }

  std::ptrdiff_t frame_start(int t) const {
    return static_cast<std::ptrdiff_t>(t) * cfg.hop - static_cast<std::ptrdiff_t>(left_pad);
  }
};

StftEngine::StftEngine(const StftConfig& cfg, std::size_t length) : impl_(std::make_unique<Impl>()) {
  cfg.validate();
  if (length == 0) throw ConfigError("cannot transform an empty signal");
  Impl& d = *impl_;
  d.cfg = cfg;
  d.length = length;
  d.bins = cfg.bins();
  d.window = periodic_hann(cfg.fft_size);
  const auto profile = overlap_profile(d.window, cfg.hop);
  d.overlap = profile[0];
  d.scale = 1.0 / std::sqrt(static_cast<double>(cfg.fft_size) * d.overlap);

  const auto n = static_cast<std::size_t>(cfg.fft_size);
  const auto h = static_cast<std::size_t>(cfg.hop);
  if (cfg.center_pad) {
    d.left_pad = n - h;
    d.frames = static_cast<int>((d.left_pad + length - 1) / h + 1);
  } else {
    d.left_pad = 0;
    d.frames = length <= n ? 1 : static_cast<int>((length - n + h - 1) / h + 1);
  }

  std::vector<double> norm(length, 0.0);
  for (int t = 0; t < d.frames; ++t) {
    const std::ptrdiff_t start = d.frame_start(t);
    for (std::size_t k = 0; k < n; ++k) {
      const std::ptrdiff_t p = start + static_cast<std::ptrdiff_t>(k);
      if (p >= 0 && p < static_cast<std::ptrdiff_t>(length)) {
        norm[static_cast<std::size_t>(p)] += d.window[k] * d.window[k];
      }
    }
  }
  d.inv_norm.resize(length);
  for (std::size_t p = 0; p < length; ++p) {
    d.inv_norm[p] = norm[p] > 1e-10 * d.overlap ? 1.0 / norm[p] : 0.0;
  }

  std::lock_guard<std::mutex> lock(planner_mutex());
  d.time_buf = fftw_alloc_real(n);
  d.freq_buf = fftw_alloc_complex(n / 2 + 1);
  d.r2c = fftw_plan_dft_r2c_1d(cfg.fft_size, d.time_buf, d.freq_buf, FFTW_ESTIMATE);
  d.c2r = fftw_plan_dft_c2r_1d(cfg.fft_size, d.freq_buf, d.time_buf, FFTW_ESTIMATE);
}

StftEngine::~StftEngine() = default;
StftEngine::StftEngine(StftEngine&&) noexcept = default;
StftEngine& StftEngine::operator=(StftEngine&&) noexcept = default;

const StftConfig& StftEngine::config() const { return impl_->cfg; }
std::size_t StftEngine::length() const { return impl_->length; }
int StftEngine::bins() const { return impl_->bins; }
int StftEngine::frames() const { return impl_->frames; }
std::size_t StftEngine::plane_size() const {
  return static_cast<std::size_t>(impl_->bins) * static_cast<std::size_t>(impl_->frames);
}

void StftEngine::forward(std::span<const double> x, std::span<double> re, std::span<double> im) const {
  const Impl& d = *impl_;
  if (x.size() != d.length || re.size() != plane_size() || im.size() != plane_size()) {
    throw ConfigError("stft: buffer size mismatch");
  }
  const int n = d.cfg.fft_size;
  const auto frames = static_cast<std::size_t>(d.frames);
  for (int t = 0; t < d.frames; ++t) {
    const std::ptrdiff_t start = d.frame_start(t);
    for (int k = 0; k < n; ++k) {
      const std::ptrdiff_t p = start + k;
      const double v = (p >= 0 && p < static_cast<std::ptrdiff_t>(d.length)) ? x[static_cast<std::size_t>(p)] : 0.0;
      d.time_buf[k] = v * d.window[static_cast<std::size_t>(k)];
    }
    fftw_execute(d.r2c);
    for (int f = 0; f < d.bins; ++f) {
      const std::size_t idx = static_cast<std::size_t>(f) * frames + static_cast<std::size_t>(t);
      re[idx] = d.freq_buf[f][0] * d.scale;
      im[idx] = d.freq_buf[f][1] * d.scale;
    }
  }
}

void StftEngine::inverse(std::span<const double> re, std::span<const double> im, std::span<double> x) const {
  const Impl& d = *impl_;
  if (x.size() != d.length || re.size() != plane_size() || im.size() != plane_size()) {
    throw ConfigError("istft: buffer size mismatch");
  }
  const int n = d.cfg.fft_size;
  const auto frames = static_cast<std::size_t>(d.frames);
  // c2r is unnormalized: it returns N * (inverse DFT).
  const double gain = 1.0 / (static_cast<double>(n) * d.scale);
  std::fill(x.begin(), x.end(), 0.0);
  for (int t = 0; t < d.frames; ++t) {
    for (int f = 0; f < d.bins; ++f) {
      const std::size_t idx = static_cast<std::size_t>(f) * frames + static_cast<std::size_t>(t);
      d.freq_buf[f][0] = re[idx];
      d.freq_buf[f][1] = im[idx];
    }
    d.freq_buf[0][1] = 0.0;
    d.freq_buf[d.bins - 1][1] = 0.0;
    fftw_execute(d.c2r);
    const std::ptrdiff_t start = d.frame_start(t);
    for (int k = 0; k < n; ++k) {
      const std::ptrdiff_t p = start + k;
      if (p < 0 || p >= static_cast<std::ptrdiff_t>(d.length)) continue;
      x[static_cast<std::size_t>(p)] += d.window[static_cast<std::size_t>(k)] * d.time_buf[k] * gain;
    }
  }
  for (std::size_t p = 0; p < d.length; ++p) x[p] *= d.inv_norm[p];
}

void StftEngine::inverse_adjoint(std::span<const double> grad_x, std::span<double> grad_re,
                                 std::span<double> grad_im) const {
  const Impl& d = *impl_;
  if (grad_x.size() != d.length || grad_re.size() != plane_size() || grad_im.size() != plane_size()) {
    throw ConfigError("istft adjoint: buffer size mismatch");
  }
  const int n = d.cfg.fft_size;
  const auto frames = static_cast<std::size_t>(d.frames);
  const double gain = 1.0 / (static_cast<double>(n) * d.scale);
  for (int t = 0; t < d.frames; ++t) {
    const std::ptrdiff_t start = d.frame_start(t);
    for (int k = 0; k < n; ++k) {
      const std::ptrdiff_t p = start + k;
      double v = 0.0;
      if (p >= 0 && p < static_cast<std::ptrdiff_t>(d.length)) {
        const auto pu = static_cast<std::size_t>(p);
        v = grad_x[pu] * d.inv_norm[pu];
      }
      d.time_buf[k] = v * d.window[static_cast<std::size_t>(k)];
    }
    fftw_execute(d.r2c);
    for (int f = 0; f < d.bins; ++f) {
      const std::size_t idx = static_cast<std::size_t>(f) * frames + static_cast<std::size_t>(t);
      const bool edge = f == 0 || f == d.bins - 1;
      const double c = edge ? gain : 2.0 * gain;
      grad_re[idx] = c * d.freq_buf[f][0];
      grad_im[idx] = edge ? 0.0 : c * d.freq_buf[f][1];
    }
  }
}

ComplexSpectrogram stft(const audio::Waveform& w, const StftConfig& cfg) {
  if (w.samples.empty()) throw ConfigError("stft of an empty waveform");
  StftEngine engine(cfg, w.samples.size());
  ComplexSpectrogram s;
  s.bins = engine.bins();
  s.frames = engine.frames();
  s.real.resize(engine.plane_size());
  s.imag.resize(engine.plane_size());
  s.fft_size = cfg.fft_size;
  s.hop = cfg.hop;
  s.sample_rate = w.sample_rate;
  s.center_pad = cfg.center_pad;
  s.original_length = w.samples.size();
  engine.forward(w.samples, s.real, s.imag);
  return s;
}

audio::Waveform istft(const ComplexSpectrogram& s) {
  StftEngine engine(s.config(), s.original_length);
  if (engine.bins() != s.bins || engine.frames() != s.frames) {
    throw ConfigError("istft: spectrogram shape does not match its recorded geometry");
  }
  audio::Waveform w;
  w.sample_rate = s.sample_rate;
  w.samples.resize(s.original_length);
  engine.inverse(s.real, s.imag, w.samples);
  return w;
}

double energy(const ComplexSpectrogram& s) {
  double e = 0.0;
  for (int f = 0; f < s.bins; ++f) {
    const bool edge = f == 0 || (s.fft_size % 2 == 0 && f == s.bins - 1);
    const double c = edge ? 1.0 : 2.0;
    for (int t = 0; t < s.frames; ++t) {
      const std::size_t i = s.index(f, t);
      e += c * (s.real[i] * s.real[i] + s.imag[i] * s.imag[i]);
    }
  }
  return e;
}

}  // namespace n2n::spectral
