// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>

#include "n2n/audio.h"
#include "n2n/error.h"

namespace n2n::audio {
namespace {

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

// Kaiser-windowed sinc anti-aliasing filter for an up/down ratio, unit DC
// gain. Mirrors Octave's resample() design: 60 dB rejection, roll-off a
// tenth of the stop-band edge.
std::vector<double> design_filter(std::int64_t up, std::int64_t down) {
  const double stopband = 1.0 / (2.0 * static_cast<double>(std::max(up, down)));
  const double roll_off = stopband / 10.0;
  const double rejection_db = 60.0;
  const auto half = static_cast<std::int64_t>(
      std::ceil((rejection_db - 8.0) / (28.714 * roll_off)));
  const double beta = 0.1102 * (rejection_db - 8.7);
  const double i0_beta = std::cyl_bessel_i(0.0, beta);

  const std::int64_t len = 2 * half + 1;
  std::vector<double> h(static_cast<std::size_t>(len));
  double sum = 0.0;
  for (std::int64_t n = 0; n < len; ++n) {
    const double t = static_cast<double>(n - half);
    const double ideal = 2.0 * static_cast<double>(up) * stopband * sinc(2.0 * stopband * t);
    const double r = 2.0 * static_cast<double>(n) / static_cast<double>(len - 1) - 1.0;
    const double window = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    h[static_cast<std::size_t>(n)] = window * ideal;
    sum += h[static_cast<std::size_t>(n)];
  }
  for (double& v : h) v /= sum;
  return h;
}

}  // namespace

Waveform resample_linear(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw ConfigError("target sample rate must be positive");
  if (w.samples.empty()) throw ConfigError("cannot resample an empty waveform");
  if (target_rate == w.sample_rate) return w;

  const std::size_t n = w.samples.size();
  const double ratio = static_cast<double>(w.sample_rate) / target_rate;
  auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * target_rate / w.sample_rate));
  n_out = std::max<std::size_t>(n_out, 1);

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  for (std::size_t j = 0; j < n_out; ++j) {
    const double pos = static_cast<double>(j) * ratio;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= n) {
      out.samples[j] = w.samples[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(i);
    out.samples[j] = w.samples[i] + frac * (w.samples[i + 1] - w.samples[i]);
  }
  return out;
}

Waveform resample_polyphase(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw ConfigError("target sample rate must be positive");
  if (w.samples.empty()) throw ConfigError("cannot resample an empty waveform");
  if (target_rate == w.sample_rate) return w;

  const std::int64_t g = std::gcd<std::int64_t>(target_rate, w.sample_rate);
  const std::int64_t up = target_rate / g;
  const std::int64_t down = w.sample_rate / g;

  std::vector<double> h = design_filter(up, down);
  for (double& v : h) v *= static_cast<double>(up);
  const auto half = static_cast<std::int64_t>((h.size() - 1) / 2);
  const auto taps = static_cast<std::int64_t>(h.size());

  // Output sample m of the full upfirdn result sits at input-rate phase
  // m*down - pre_pad; the first pre_remove outputs are filter delay.
  const std::int64_t pre_pad = down - half % down;
  const std::int64_t pre_remove = (half + pre_pad) / down;
  const auto n = static_cast<std::int64_t>(w.samples.size());
  const std::int64_t n_out = (n * up + down - 1) / down;

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.assign(static_cast<std::size_t>(n_out), 0.0);
  for (std::int64_t j = 0; j < n_out; ++j) {
    const std::int64_t phase = (j + pre_remove) * down - pre_pad;
    // taps index k = phase - i*up must lie in [0, taps)
    std::int64_t i_lo = phase - (taps - 1) <= 0 ? 0 : (phase - (taps - 1) + up - 1) / up;
    std::int64_t i_hi = phase < 0 ? -1 : phase / up;
    i_hi = std::min(i_hi, n - 1);
    double acc = 0.0;
    for (std::int64_t i = i_lo; i <= i_hi; ++i) {
      acc += w.samples[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(phase - i * up)];
    }
    out.samples[static_cast<std::size_t>(j)] = acc;
  }
  return out;
}

}  // namespace n2n::audio
