// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "n2n/cx/autograd.h"
#include "n2n/rng.h"

namespace n2n::objective {

inline constexpr double kNormEps = 1e-8;

// x: noisy input, y: target (clean or noisy), y_hat: estimate.
struct LossInputs {
  std::span<const double> x;
  std::span<const double> y;
  std::span<const double> y_hat;
};

double wsdr_loss(const LossInputs& in);
double l2_loss(std::span<const double> a, std::span<const double> b);
double l1_loss(std::span<const double> a, std::span<const double> b);

// Batched weighted-SDR loss, averaged over the batch. y_hat, x and y are
// [B, L]; only y_hat is differentiated.
template <typename T>
cx::Var<T> wsdr_loss(const cx::Var<T>& y_hat, const cx::Tensor<T>& x, const cx::Tensor<T>& y);

// Throws ConfigError if |mean| > 4 sigma / sqrt(n).
void require_zero_mean(std::span<const double> samples, double sigma, const char* what);

struct EquivalenceReport {
  double l2_n2c = 0.0;
  double l2_n2n = 0.0;
  double var_m = 0.0;
  double gap = 0.0;  // l2_n2n - l2_n2c - var_m
  std::int64_t trials = 0;
  double sigma = 0.0;

  nlohmann::json to_json() const;
};

using NoiseSampler = std::function<double(Rng&)>;

// f = identity on a fixed deterministic signal. trials must be >= 1e4.
EquivalenceReport n2n_equivalence_experiment(double sigma, std::int64_t trials, Rng& rng);
EquivalenceReport n2n_equivalence_experiment(double sigma, std::int64_t trials, Rng& rng, const NoiseSampler& noise);

// Mean |gap| over `replicates` runs per trial count, each with its own
// derived stream. Small trial counts are allowed here.
struct GapPoint {
  std::int64_t trials = 0;
  double mean_abs_gap = 0.0;
};
std::vector<GapPoint> gap_sweep(double sigma, const std::vector<std::int64_t>& trial_counts, int replicates,
                                std::uint64_t seed);

// Grid search over constants c for argmin mean|c - x2| with x2 = y + m.
struct MedianCheck {
  double y = 0.0;
  double argmin = 0.0;
  double l1_at_argmin = 0.0;
};
MedianCheck l1_median_check(double y, double sigma, std::int64_t trials, double grid_step, Rng& rng,
                            const NoiseSampler& noise = {});

// Same bookkeeping with an arbitrary signal-to-signal map f applied to
// length-n draws of y + n; used with a frozen network.
using SignalMap = std::function<std::vector<double>(const std::vector<double>&)>;
EquivalenceReport n2n_equivalence_network(const SignalMap& f, const std::vector<double>& y, double sigma,
                                          int draws, Rng& rng);

}  // namespace n2n::objective
