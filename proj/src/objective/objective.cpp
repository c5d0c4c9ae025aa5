// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#include "n2n/objective.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "n2n/error.h"

namespace n2n::objective {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ConfigError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

// Sums needed by the loss and its gradient for one item.
struct WsdrParts {
  double yy = 0, yh = 0, hh = 0;  // <y,y>, <y,y_hat>, <y_hat,y_hat>
  double zz = 0, zw = 0, ww = 0;  // z = x - y, w = x - y_hat
};

template <typename A, typename B, typename C>
WsdrParts accumulate_parts(const A* x, const B* y, const C* h, std::size_t n) {
  WsdrParts p;
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i], yi = y[i], hi = h[i];
    const double z = xi - yi, w = xi - hi;
    p.yy += yi * yi;
    p.yh += yi * hi;
    p.hh += hi * hi;
    p.zz += z * z;
    p.zw += z * w;
    p.ww += w * w;
  }
  return p;
}

struct WsdrTerms {
  double alpha = 0;
  double loss = 0;
  bool first = false, second = false;
  double ny = 0, nh = 0, nz = 0, nw = 0;
  double cos1 = 0, cos2 = 0;
};

WsdrTerms evaluate(const WsdrParts& p) {
  WsdrTerms t;
  const double denom = p.yy + p.zz;
  t.alpha = denom > 0.0 ? p.yy / denom : 0.0;
  t.ny = std::sqrt(p.yy);
  t.nh = std::sqrt(p.hh);
  t.nz = std::sqrt(p.zz);
  t.nw = std::sqrt(p.ww);
  // Written as !(< eps) so NaN norms propagate instead of zeroing a term.
  t.first = !(t.ny < kNormEps) && !(t.nh < kNormEps);
  t.second = !(t.nz < kNormEps) && !(t.nw < kNormEps);
  if (t.first) t.cos1 = p.yh / (t.ny * t.nh);
  if (t.second) t.cos2 = p.zw / (t.nz * t.nw);
  t.loss = -t.alpha * t.cos1 - (1.0 - t.alpha) * t.cos2;
  return t;
}

}  // namespace

double wsdr_loss(const LossInputs& in) {
  require_same_length(in.x.size(), in.y.size(), "wsdr_loss");
  require_same_length(in.x.size(), in.y_hat.size(), "wsdr_loss");
  return evaluate(accumulate_parts(in.x.data(), in.y.data(), in.y_hat.data(), in.x.size())).loss;
}

double l2_loss(std::span<const double> a, std::span<const double> b) {
  require_same_length(a.size(), b.size(), "l2_loss");
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double l1_loss(std::span<const double> a, std::span<const double> b) {
  require_same_length(a.size(), b.size(), "l1_loss");
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

template <typename T>
cx::Var<T> wsdr_loss(const cx::Var<T>& y_hat, const cx::Tensor<T>& x, const cx::Tensor<T>& y) {
  const auto& hs = y_hat.shape();
  if (hs.size() != 2 || hs != x.shape || hs != y.shape) {
    throw ConfigError("wsdr_loss: expected equal [B, L] shapes, got " + cx::to_string(hs) + ", " +
                      cx::to_string(x.shape) + ", " + cx::to_string(y.shape));
  }
  const std::int64_t batch = hs[0], len = hs[1];
  const T* h = y_hat.value().data.data();
  double total = 0.0;
  std::vector<WsdrTerms> terms(static_cast<std::size_t>(batch));
  for (std::int64_t b = 0; b < batch; ++b) {
    const auto off = b * len;
    terms[b] = evaluate(accumulate_parts(x.data.data() + off, y.data.data() + off, h + off, static_cast<std::size_t>(len)));
    total += terms[b].loss;
  }
  cx::Tensor<T> out({1});
  out.data[0] = static_cast<T>(total / static_cast<double>(batch));

  auto backward = [x, y, terms, batch, len](cx::Node<T>& n) {
    auto& in = *n.inputs[0];
    const T* hv = in.value.data.data();
    auto g = in.grad_buffer();
    const double scale = static_cast<double>(n.grad[0]) / static_cast<double>(batch);
    for (std::int64_t b = 0; b < batch; ++b) {
      const auto& t = terms[b];
      const auto off = b * len;
      // d cos(a, v)/dv = a / (|a||v|) - cos(a, v) v / |v|^2, with v = y_hat
      // for the first term and v = x - y_hat (sign flip) for the second.
      const double a1 = t.first ? t.alpha / (t.ny * t.nh) : 0.0;
      const double b1 = t.first ? t.alpha * t.cos1 / (t.nh * t.nh) : 0.0;
      const double a2 = t.second ? (1.0 - t.alpha) / (t.nz * t.nw) : 0.0;
      const double b2 = t.second ? (1.0 - t.alpha) * t.cos2 / (t.nw * t.nw) : 0.0;
      for (std::int64_t i = 0; i < len; ++i) {
        const double xi = x.data[off + i], yi = y.data[off + i], hi = hv[off + i];
        const double d = -(a1 * yi - b1 * hi) + (a2 * (xi - yi) - b2 * (xi - hi));
        g[off + i] += static_cast<T>(scale * d);
      }
    }
  };
  return cx::make_result<T>(std::move(out), {y_hat}, backward);
}

template cx::Var<float> wsdr_loss<float>(const cx::Var<float>&, const cx::Tensor<float>&, const cx::Tensor<float>&);
template cx::Var<double> wsdr_loss<double>(const cx::Var<double>&, const cx::Tensor<double>&,
                                           const cx::Tensor<double>&);

void require_zero_mean(std::span<const double> samples, double sigma, const char* what) {
  if (samples.empty()) return;
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(samples.size());
  const double bound = 4.0 * sigma / std::sqrt(static_cast<double>(samples.size()));
  if (std::abs(mean) > bound) {
    throw ConfigError(std::string(what) + ": noise is not zero-mean (sample mean " + std::to_string(mean) +
                      " exceeds " + std::to_string(bound) + ")");
  }
}

nlohmann::json EquivalenceReport::to_json() const {
  return {{"l2_n2c", l2_n2c}, {"l2_n2n", l2_n2n}, {"var_m", var_m}, {"gap", gap}, {"trials", trials}, {"sigma", sigma}};
}

namespace {

double signal_at(std::int64_t t) { return std::sin(0.05 * static_cast<double>(t)) * 0.5; }

EquivalenceReport run_identity(double sigma, std::int64_t trials, Rng& rng, const NoiseSampler& noise) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("equivalence: sigma must be finite and >= 0");
  if (trials < 1) throw ConfigError("equivalence: trials must be >= 1");
  std::vector<double> n(static_cast<std::size_t>(trials)), m(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) {
    n[i] = noise ? noise(rng) : sigma * rng.normal();
    m[i] = noise ? noise(rng) : sigma * rng.normal();
  }
  require_zero_mean(n, sigma, "equivalence input noise");
  require_zero_mean(m, sigma, "equivalence target noise");

  EquivalenceReport r;
  r.trials = trials;
  r.sigma = sigma;
  double sum_m = 0.0, sum_m2 = 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const double y = signal_at(static_cast<std::int64_t>(i));
    const double fx = y + n[i];  // f = identity
    const double x2 = y + m[i];
    r.l2_n2n += (fx - x2) * (fx - x2);
    r.l2_n2c += (fx - y) * (fx - y);
    sum_m += m[i];
    sum_m2 += m[i] * m[i];
  }
  const double k = static_cast<double>(trials);
  r.l2_n2n /= k;
  r.l2_n2c /= k;
  const double mean_m = sum_m / k;
  r.var_m = std::max(0.0, sum_m2 / k - mean_m * mean_m);
  r.gap = r.l2_n2n - r.l2_n2c - r.var_m;
  return r;
}

}  // namespace

EquivalenceReport n2n_equivalence_experiment(double sigma, std::int64_t trials, Rng& rng) {
  return n2n_equivalence_experiment(sigma, trials, rng, {});
}

EquivalenceReport n2n_equivalence_experiment(double sigma, std::int64_t trials, Rng& rng, const NoiseSampler& noise) {
  if (trials < 10000) throw ConfigError("equivalence: trials must be >= 10000");
  return run_identity(sigma, trials, rng, noise);
}

std::vector<GapPoint> gap_sweep(double sigma, const std::vector<std::int64_t>& trial_counts, int replicates,
                                std::uint64_t seed) {
  if (replicates < 1) throw ConfigError("gap_sweep: replicates must be >= 1");
  std::vector<GapPoint> out;
  for (std::size_t c = 0; c < trial_counts.size(); ++c) {
    GapPoint p{trial_counts[c], 0.0};
    for (int r = 0; r < replicates; ++r) {
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(r)}));
      p.mean_abs_gap += std::abs(run_identity(sigma, trial_counts[c], rng, {}).gap);
    }
    p.mean_abs_gap /= replicates;
    out.push_back(p);
  }
  return out;
}

MedianCheck l1_median_check(double y, double sigma, std::int64_t trials, double grid_step, Rng& rng,
                            const NoiseSampler& noise) {
  if (trials < 1) throw ConfigError("l1_median_check: trials must be >= 1");
  if (!(grid_step > 0.0)) throw ConfigError("l1_median_check: grid_step must be > 0");
  std::vector<double> x2(static_cast<std::size_t>(trials));
  for (auto& v : x2) v = y + (noise ? noise(rng) : sigma * rng.normal());
  std::sort(x2.begin(), x2.end());
  std::vector<double> prefix(x2.size() + 1, 0.0);
  for (std::size_t i = 0; i < x2.size(); ++i) prefix[i + 1] = prefix[i] + x2[i];
  const double total = prefix.back();
  const double k = static_cast<double>(trials);
  auto l1_at = [&](double c) {
    const auto below = static_cast<std::size_t>(std::lower_bound(x2.begin(), x2.end(), c) - x2.begin());
    const double lo = c * static_cast<double>(below) - prefix[below];
    const double hi = (total - prefix[below]) - c * static_cast<double>(x2.size() - below);
    return (lo + hi) / k;
  };
  const double span = std::max(4.0 * sigma, 10.0 * grid_step);
  const auto steps = static_cast<std::int64_t>(std::ceil(span / grid_step));
  MedianCheck best{y, y, l1_at(y)};
  for (std::int64_t s = -steps; s <= steps; ++s) {
    const double c = y + static_cast<double>(s) * grid_step;
    const double v = l1_at(c);
    if (v < best.l1_at_argmin) {
      best.argmin = c;
      best.l1_at_argmin = v;
    }
  }
  return best;
}

EquivalenceReport n2n_equivalence_network(const SignalMap& f, const std::vector<double>& y, double sigma, int draws,
                                          Rng& rng) {
  if (y.empty()) throw ConfigError("n2n_equivalence_network: empty signal");
  if (draws < 1) throw ConfigError("n2n_equivalence_network: draws must be >= 1");
  EquivalenceReport r;
  r.sigma = sigma;
  r.trials = static_cast<std::int64_t>(draws) * static_cast<std::int64_t>(y.size());
  double sum_m = 0.0, sum_m2 = 0.0;
  std::vector<double> x1(y.size()), x2(y.size());
  for (int d = 0; d < draws; ++d) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double m = sigma * rng.normal();
      x1[i] = y[i] + sigma * rng.normal();
      x2[i] = y[i] + m;
      sum_m += m;
      sum_m2 += m * m;
    }
    const auto fx = f(x1);
    require_same_length(fx.size(), y.size(), "n2n_equivalence_network");
    for (std::size_t i = 0; i < y.size(); ++i) {
      r.l2_n2n += (fx[i] - x2[i]) * (fx[i] - x2[i]);
      r.l2_n2c += (fx[i] - y[i]) * (fx[i] - y[i]);
    }
  }
  const double k = static_cast<double>(r.trials);
  r.l2_n2n /= k;
  r.l2_n2c /= k;
  r.var_m = std::max(0.0, sum_m2 / k - (sum_m / k) * (sum_m / k));
  r.gap = r.l2_n2n - r.l2_n2c - r.var_m;
  return r;
}

}  // namespace n2n::objective
