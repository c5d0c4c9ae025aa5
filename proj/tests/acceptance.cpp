// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

// Acceptance runner: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when all pass). Pass criterion numbers as
// arguments to run a subset, e.g. `n2n_acceptance 1 4 7`. Scratch data goes
// to a temporary directory unless --work-dir is given.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"
#include "n2n/cli.h"
#include "n2n/dcunet.h"
#include "n2n/metrics.h"
#include "n2n/mixgen.h"
#include "n2n/objective.h"
#include "n2n/spectral.h"
#include "support.h"

using namespace n2n;
using cx::ComplexTensor;
using cx::Tensor;
using cx::Var;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "n2n");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << "  n2n " << args[1] << " failed (" << code << "): " << err.str();
  return code;
}

// ---------------------------------------------------------------------------

Outcome transform_suite() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst_rt = 0.0, worst_energy = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto cfg = i % 2 ? spectral::StftConfig::full(16000) : spectral::StftConfig::desk();
    audio::Waveform w;
    w.samples = testing::gaussian(16000 + rng.index(32001), rng, rng.uniform(0.01, 1.0));
    auto s = spectral::stft(w, cfg);
    worst_rt = std::max(worst_rt, testing::max_abs_diff(spectral::istft(s).samples, w.samples));
    double time_energy = 0.0, freq_energy = 0.0;
    for (double v : w.samples) time_energy += v * v;
    for (int f = 0; f < s.bins; ++f) {
      const double c = (f == 0 || f == s.bins - 1) ? 1.0 : 2.0;
      for (int t = 0; t < s.frames; ++t) {
        auto k = s.index(f, t);
        freq_energy += c * (s.real[k] * s.real[k] + s.imag[k] * s.imag[k]);
      }
    }
    worst_energy = std::max(worst_energy, std::abs(freq_energy / time_energy - 1.0));
  }
  const double dt = seconds_since(t0);
  return {worst_rt < 1e-6 && worst_energy < 1e-6 && dt < 30.0,
          fmt::format("100 signals of 1-3 s: max round-trip error {:.2e}, max energy ratio error {:.2e}, {:.1f} s",
                      worst_rt, worst_energy, dt)};
}

// ---------------------------------------------------------------------------

Outcome oracle_suite() {
  const auto t0 = Clock::now();
  Rng rng(202);
  double worst = 0.0;
  long cases = 0;
  auto weights = [&](const cx::Shape& shape, std::int64_t co) {
    cx::ComplexConvWeights<double> w;
    w.w_real = Var<double>::leaf(testing::random_tensor(shape, rng));
    w.w_imag = Var<double>::leaf(testing::random_tensor(shape, rng));
    w.b_real = Var<double>::leaf(testing::random_tensor({co}, rng));
    w.b_imag = Var<double>::leaf(testing::random_tensor({co}, rng));
    return w;
  };
  for (int ci = 1; ci <= 2; ++ci)
    for (int co = 1; co <= 2; ++co)
      for (int kh = 1; kh <= 3; ++kh)
        for (int kw = 1; kw <= 3; ++kw)
          for (int sh = 1; sh <= 2; ++sh)
            for (int sw = 1; sw <= 2; ++sw)
              for (int ph = 0; ph < std::min(kh, 2); ++ph)
                for (int pw = 0; pw < std::min(kw, 2); ++pw)
                  for (int h = 1; h <= 8; ++h)
                    for (int wd = 1; wd <= 8; ++wd) {
                      const cx::Pair s{sh, sw}, p{ph, pw};
                      if (h + 2 * ph >= kh && wd + 2 * pw >= kw) {
                        auto x = testing::random_complex({2, ci, h, wd}, rng);
                        auto w = weights({co, ci, kh, kw}, co);
                        auto y = cx::complex_conv2d(x, w, s, p);
                        Tensor<double> orr, oii;
                        testing::conv2d_oracle(x.real(), x.imag(), w.w_real.value(), w.w_imag.value(),
                                               w.b_real.value().data, w.b_imag.value().data, s, p, orr, oii);
                        worst = std::max({worst, testing::max_abs_diff(y.real().data, orr.data),
                                          testing::max_abs_diff(y.imag().data, oii.data)});
                        ++cases;
                      }
                      for (int oph = 0; oph < sh; ++oph)
                        for (int opw = 0; opw < sw; ++opw) {
                          if (cx::conv_transpose_out_size(h, kh, sh, ph, oph) < 1 ||
                              cx::conv_transpose_out_size(wd, kw, sw, pw, opw) < 1)
                            continue;
                          auto x = testing::random_complex({2, ci, h, wd}, rng);
                          auto w = weights({ci, co, kh, kw}, co);
                          auto y = cx::complex_conv_transpose2d(x, w, s, p, {oph, opw});
                          Tensor<double> orr, oii;
                          testing::conv_transpose2d_oracle(x.real(), x.imag(), w.w_real.value(), w.w_imag.value(),
                                                           w.b_real.value().data, w.b_imag.value().data, s, p,
                                                           {oph, opw}, orr, oii);
                          worst = std::max({worst, testing::max_abs_diff(y.real().data, orr.data),
                                            testing::max_abs_diff(y.imag().data, oii.data)});
                          ++cases;
                        }
                    }
  const double dt = seconds_since(t0);
  return {worst < 1e-6 && dt < 60.0,
          fmt::format("{} conv/transposed-conv cases (channels <= 2, 8x8, 3x3, stride <= 2): max error {:.2e}, {:.1f} s",
                      cases, worst, dt)};
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  Rng rng(303);
  std::vector<std::pair<std::string, double>> results;
  double zero_bias_grad = 0.0;
  auto record = [&](const std::string& name, const testing::GradCheckResult& r) {
    results.emplace_back(name, r.max_rel_error);
  };
  auto weights = [&](const cx::Shape& shape, std::int64_t co) {
    cx::ComplexConvWeights<double> w;
    w.w_real = Var<double>::leaf(testing::random_tensor(shape, rng), true);
    w.w_imag = Var<double>::leaf(testing::random_tensor(shape, rng), true);
    w.b_real = Var<double>::leaf(testing::random_tensor({co}, rng), true);
    w.b_imag = Var<double>::leaf(testing::random_tensor({co}, rng), true);
    return w;
  };
  using testing::check_gradients;
  using testing::probe;

  for (cx::Pair stride : {cx::Pair{1, 1}, cx::Pair{2, 1}, cx::Pair{2, 2}}) {
    auto x = testing::random_complex({2, 2, 6, 5}, rng, true);
    auto w = weights({3, 2, 3, 3}, 3);
    record(fmt::format("conv2d s{}x{}", stride[0], stride[1]),
           check_gradients([&] { return probe(cx::complex_conv2d(x, w, stride, {1, 1}).storage); },
                           {x.storage, w.w_real, w.w_imag, w.b_real, w.b_imag}, 1e-6, 64));
    auto z = testing::random_complex({2, 3, 3, 4}, rng, true);
    auto wt = weights({3, 2, 3, 3}, 2);
    cx::Pair op{stride[0] - 1, stride[1] - 1};
    record(fmt::format("conv_transpose2d s{}x{}", stride[0], stride[1]),
           check_gradients([&] { return probe(cx::complex_conv_transpose2d(z, wt, stride, {1, 1}, op).storage); },
                           {z.storage, wt.w_real, wt.w_imag, wt.b_real, wt.b_imag}, 1e-6, 64));
  }
  {
    auto x = testing::random_complex({2, 2, 4, 4}, rng, true);
    record("lecrelu", check_gradients([&] { return probe(cx::lecrelu(x, 0.01).storage); }, {x.storage}));
    auto a = testing::random_complex({2, 1, 3, 4}, rng, true);
    auto b = testing::random_complex({2, 2, 3, 4}, rng, true);
    record("concat_channels",
           check_gradients([&] { return probe(cx::concat_channels(a, b).storage); }, {a.storage, b.storage}));
    auto c = testing::random_complex({2, 1, 3, 4}, rng, true);
    record("complex_mul", check_gradients([&] { return probe(cx::complex_mul(a, c).storage); }, {a.storage, c.storage}));
    record("polar_mask", check_gradients([&] { return probe(cx::polar_mask(b).storage); }, {b.storage}));
  }
  {
    auto x = testing::random_complex({3, 2, 3, 3}, rng, true);
    auto bn = cx::ComplexBatchNorm<double>::create(2);
    for (auto* v : {&bn.gamma_rr, &bn.gamma_ri, &bn.gamma_ii, &bn.beta_r, &bn.beta_i})
      for (auto& e : v->mutable_value().data) e += rng.uniform(-0.3, 0.3);
    std::vector<Var<double>> leaves{x.storage, bn.gamma_rr, bn.gamma_ri, bn.gamma_ii, bn.beta_r, bn.beta_i};
    record("complex_batch_norm (training)",
           check_gradients([&] { return probe(cx::complex_batch_norm(x, bn, true).storage); }, leaves));
    record("complex_batch_norm (inference)",
           check_gradients([&] { return probe(cx::complex_batch_norm(x, bn, false).storage); }, leaves));
    record("complex_whiten", check_gradients([&] { return probe(cx::complex_whiten(x).storage); }, {x.storage}));
  }
  {
    auto eng = std::make_shared<spectral::StftEngine>(spectral::StftConfig{64, 16}, 300);
    auto s = testing::random_complex({2, 1, eng->bins(), eng->frames()}, rng, true);
    record("istft", check_gradients([&] { return probe(cx::istft(s, eng)); }, {s.storage}, 1e-6, 96));
  }
  {
    auto a = Var<double>::leaf(testing::random_tensor({4, 5}, rng), true);
    auto b = Var<double>::leaf(testing::random_tensor({4, 5}, rng), true);
    using namespace cx::ops;
    record("add", check_gradients([&] { return probe(add(a, b)); }, {a, b}));
    record("sub", check_gradients([&] { return probe(sub(a, b)); }, {a, b}));
    record("mul", check_gradients([&] { return probe(mul(a, b)); }, {a, b}));
    record("scale", check_gradients([&] { return probe(scale(a, -1.7)); }, {a}));
    record("tanh", check_gradients([&] { return probe(cx::ops::tanh(a)); }, {a}));
    record("sum", check_gradients([&] { return sum(a); }, {a}));
    record("dot", check_gradients([&] { return dot(a, b); }, {a, b}));
    record("norm", check_gradients([&] { return norm(a); }, {a}));
  }
  {
    auto x = testing::random_tensor({3, 80}, rng), y = testing::random_tensor({3, 80}, rng);
    auto h = Var<double>::leaf(testing::random_tensor({3, 80}, rng), true);
    record("wsdr_loss", check_gradients([&] { return objective::wsdr_loss(h, x, y); }, {h}, 1e-6, 240));
  }
  {
    dcunet::ArchitectureSpec spec;
    spec.freq_bins = 9;
    spec.encoder = {{{3, 3}, {2, 2}, 2}, {{3, 3}, {2, 1}, 3}};
    dcunet::ModelParameters<double> p(spec, 6);
    for (auto& np : p.parameters())
      for (auto& v : np.var->mutable_value().data) v += rng.uniform(-0.2, 0.2);
    auto x = testing::random_complex({2, 1, 9, 5}, rng, true);
    auto r = testing::check_network_gradients(p, x);
    results.emplace_back("network forward + mask", r.max_rel_error);
    zero_bias_grad = r.max_abs_pre_norm_bias_grad;
  }
  const double dt = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  for (auto& [name, err] : results) {
    if (err >= worst) {
      worst = err;
      worst_name = name;
    }
  }
  return {worst < 1e-4 && zero_bias_grad < 1e-10 && dt < 120.0,
          fmt::format("{} ops checked, max relative error {:.2e} ({}); pre-norm bias |grad| {:.1e}; {:.1f} s",
                      results.size(), worst, worst_name, zero_bias_grad, dt)};
}

// ---------------------------------------------------------------------------

Outcome loss_suite() {
  Rng rng(404);
  double worst_perfect = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::size_t n = 2 + rng.index(2000);
    auto x = testing::gaussian(n, rng), y = testing::gaussian(n, rng);
    worst_perfect =
        std::max(worst_perfect, std::abs(objective::wsdr_loss(objective::LossInputs{x, y, y}) + 1.0));
  }
  double lo = 1.0, hi = -1.0;
  for (int i = 0; i < 10000; ++i) {
    std::size_t n = 1 + rng.index(64);
    std::vector<double> x(n), y(n), h(n);
    for (std::size_t k = 0; k < n; ++k) {
      x[k] = rng.uniform(-1, 1);
      y[k] = rng.uniform(-1, 1);
      h[k] = rng.uniform(-1, 1);
    }
    double l = objective::wsdr_loss(objective::LossInputs{x, y, h});
    lo = std::min(lo, l);
    hi = std::max(hi, l);
  }
  double worst_l = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::size_t n = 1 + rng.index(500);
    auto a = testing::gaussian(n, rng), b = testing::gaussian(n, rng);
    long double s1 = 0, s2 = 0;
    for (std::size_t k = 0; k < n; ++k) {
      long double d = (long double)a[k] - b[k];
      s1 += d < 0 ? -d : d;
      s2 += d * d;
    }
    worst_l = std::max(worst_l, std::abs(objective::l1_loss(a, b) - static_cast<double>(s1 / n)));
    worst_l = std::max(worst_l, std::abs(objective::l2_loss(a, b) - static_cast<double>(s2 / n)));
  }
  bool ok = worst_perfect < 1e-9 && lo >= -1.0 && hi <= 1.0 && worst_l < 1e-12;
  return {ok, fmt::format("|wsdr(x,y,y)+1| <= {:.1e}; 1e4 triples in [{:.4f}, {:.4f}]; L1/L2 oracle error {:.1e}",
                          worst_perfect, lo, hi, worst_l)};
}

// ---------------------------------------------------------------------------

Outcome theory_suite() {
  const auto t0 = Clock::now();
  Rng rng(505);
  auto r = objective::n2n_equivalence_experiment(1.0, 100000, rng);
  auto sweep = objective::gap_sweep(1.0, {1000, 10000, 100000}, 16, 505);
  const bool monotone = sweep[0].mean_abs_gap > sweep[1].mean_abs_gap && sweep[1].mean_abs_gap > sweep[2].mean_abs_gap;
  const double dt = seconds_since(t0);
  const double d1 = std::abs(r.l2_n2n - 2.0), d2 = std::abs(r.l2_n2n - r.l2_n2c - r.var_m);
  return {d1 < 0.03 && d2 < 0.02 && monotone && dt < 60.0,
          fmt::format("l2_n2n {:.4f} (|-2| = {:.4f}), l2_n2c {:.4f}, var(m) {:.4f}, gap {:.4f}; mean |gap| "
                      "{:.4f} > {:.4f} > {:.4f}; {:.1f} s",
                      r.l2_n2n, d1, r.l2_n2c, r.var_m, d2, sweep[0].mean_abs_gap, sweep[1].mean_abs_gap,
                      sweep[2].mean_abs_gap, dt)};
}

// ---------------------------------------------------------------------------

struct PairStats {
  double worst_snr_error = 0.0;
  double mean_rho = 0.0;
  double mean_abs_rho = 0.0;
  std::size_t pairs = 0;
};

PairStats pair_stats(const mixgen::DatasetManifest& m) {
  PairStats s;
  for (const auto& r : m.records) {
    auto in = audio::read_wav(r.input_path), tg = audio::read_wav(r.target_path), cl = audio::read_wav(r.clean_path);
    auto ni = testing::minus(in.samples, cl.samples), nt = testing::minus(tg.samples, cl.samples);
    s.worst_snr_error = std::max(s.worst_snr_error, std::abs(mixgen::compute_snr_db(cl.samples, ni) - r.input_snr_db));
    s.worst_snr_error =
        std::max(s.worst_snr_error, std::abs(mixgen::compute_snr_db(cl.samples, nt) - *r.target_snr_db));
    double rho = testing::pearson(ni, nt);
    s.mean_rho += rho;
    s.mean_abs_rho += std::abs(rho);
    ++s.pairs;
  }
  s.mean_rho /= static_cast<double>(s.pairs);
  s.mean_abs_rho /= static_cast<double>(s.pairs);
  return s;
}

Outcome mixgen_suite(const fs::path& work) {
  const auto dir = work / "mixgen";
  fs::remove_all(dir);
  mixgen::write_synth_corpus(dir / "clean", 20, 1.0, 16000, 61);
  testing::write_noise_tree(dir / "noise", 16000, 62);
  auto bank = mixgen::NoiseBank::scan(dir / "noise");
  auto cat_set = mixgen::generate_dataset(dir / "clean", bank, mixgen::Mode::kN2N, 100, dir / "cat", 63);
  auto white_bank = mixgen::NoiseBank::white_only();
  mixgen::GenerateOptions white_opts;
  white_opts.input_category = mixgen::kWhite;
  auto white_set =
      mixgen::generate_dataset(dir / "clean", white_bank, mixgen::Mode::kN2N, 100, dir / "white", 64, white_opts);
  bool categories_differ = true;
  for (const auto& r : cat_set.records) categories_differ = categories_differ && r.input_category != r.target_category;
  auto cs = pair_stats(cat_set), ws = pair_stats(white_set);

  auto again = mixgen::NoiseBank::scan(dir / "noise");
  mixgen::generate_dataset(dir / "clean", again, mixgen::Mode::kN2N, 100, dir / "cat_again", 63);
  mixgen::generate_dataset(dir / "clean", white_bank, mixgen::Mode::kN2N, 100, dir / "white_again", 64, white_opts);
  const bool deterministic =
      testing::trees_identical(dir / "cat", dir / "cat_again") && testing::trees_identical(dir / "white", dir / "white_again");
  fs::remove_all(dir);

  const double snr_err = std::max(cs.worst_snr_error, ws.worst_snr_error);
  const double abs_rho = std::max(cs.mean_abs_rho, ws.mean_abs_rho);
  const bool ok = snr_err <= 1e-6 && abs_rho < 0.05 && std::abs(cs.mean_rho) < 0.05 && std::abs(ws.mean_rho) < 0.05 &&
                  categories_differ && deterministic;
  return {ok, fmt::format("achieved-SNR error {:.1e} dB over {} pairs; mean |rho| {:.4f} (categories) / {:.4f} "
                          "(white), mean rho {:+.4f} / {:+.4f}; byte-identical rerun: {}",
                          snr_err, cs.pairs + ws.pairs, cs.mean_abs_rho, ws.mean_abs_rho, cs.mean_rho, ws.mean_rho,
                          deterministic ? "yes" : "no")};
}

// ---------------------------------------------------------------------------

Outcome metrics_suite() {
  Rng rng(707);
  double self = 0.0;
  for (std::uint64_t k = 0; k < 5; ++k) {
    Rng r(k);
    auto c = mixgen::synth_speech(2.0, 16000, r);
    self = std::max(self, std::abs(metrics::stoi_metric(c, c) - 1.0));
  }
  const fs::path fixture = N2N_SOURCE_DIR "/tests/data/stoi";
  std::ifstream in(fixture / "reference.json");
  auto ref = nlohmann::json::parse(in);
  double worst_ref = 0.0;
  std::size_t ref_cases = 0;
  for (const auto& c : ref["cases"]) {
    auto clean = audio::read_wav(fixture / c["clean"].get<std::string>());
    auto deg = audio::read_wav(fixture / c["degraded"].get<std::string>());
    worst_ref = std::max(worst_ref, std::abs(metrics::stoi_metric(clean, deg) - c["stoi"].get<double>()));
    ++ref_cases;
  }
  auto clean = mixgen::synth_speech(1.0, 16000, rng);
  audio::Waveform loud{clean.samples, 16000};
  for (auto& v : loud.samples) v += 100.0 * rng.normal();
  const double top = metrics::ssnr_metric(clean, clean), bottom = metrics::ssnr_metric(clean, loud);
  double worst_snr = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double target = rng.uniform(-10.0, 40.0);
    auto n = mixgen::scale_noise_to_snr(clean.samples, testing::gaussian(clean.size(), rng), target);
    std::vector<double> est(clean.samples);
    for (std::size_t k = 0; k < est.size(); ++k) est[k] += n[k];
    worst_snr = std::max(worst_snr, std::abs(metrics::snr_metric(clean.samples, est) - target));
  }
  const bool ok = self <= 1e-6 && ref_cases == 10 && worst_ref <= 0.01 && top == 35.0 && bottom == -10.0 &&
                  worst_snr <= 1e-6;
  return {ok, fmt::format("|stoi(x,x)-1| {:.1e}; {} reference pairs, max |diff| {:.4f}; ssnr clamps {} / {}; "
                          "snr vs mixing error {:.1e} dB",
                          self, ref_cases, worst_ref, top, bottom, worst_snr)};
}

// ---------------------------------------------------------------------------

constexpr int kE2eSteps = 240;

Outcome end_to_end(const fs::path& work) {
  const auto t0 = Clock::now();
  const auto dir = work / "e2e";
  fs::remove_all(dir);
  auto p = [&](const char* s) { return (dir / s).string(); };
  bool ok = cli({"--seed", "1", "synth", "--out", p("clean_train"), "--count", "160", "--seconds", "1"}) == 0 &&
            cli({"--seed", "2", "synth", "--out", p("clean_test"), "--count", "40", "--seconds", "1"}) == 0 &&
            cli({"--seed", "3", "mix", "--clean-dir", p("clean_train"), "--mode", "white", "--count", "160", "--out",
                 p("n2n")}) == 0 &&
            cli({"--seed", "3", "mix", "--clean-dir", p("clean_train"), "--white", "--mode", "n2c", "--count", "160",
                 "--out", p("n2c")}) == 0 &&
            cli({"--seed", "4", "mix", "--clean-dir", p("clean_test"), "--white", "--mode", "test", "--count", "40",
                 "--out", p("test")}) == 0;
  if (!ok) return {false, "dataset preparation failed"};
  const auto steps = std::to_string(kE2eSteps);
  for (const char* mode : {"n2c", "n2n"}) {
    const auto t1 = Clock::now();
    if (cli({"--seed", "5", "train", "--manifest", (dir / mode / "manifest.jsonl").string(), "--arch", "desk",
             "--max-steps", steps, "--log-every", "0", "--out", (dir / (std::string("run_") + mode)).string()}) != 0) {
      return {false, fmt::format("training ({}) failed", mode)};
    }
    std::cerr << fmt::format("  trained {} for {} steps in {:.0f} s\n", mode, kE2eSteps, seconds_since(t1));
  }
  if (cli({"eval", "--manifest", p("test/manifest.jsonl"), "--n2c", p("run_n2c/model.ckpt"), "--n2n",
           p("run_n2n/model.ckpt"), "--out", p("eval")}) != 0) {
    return {false, "evaluation failed"};
  }
  std::ifstream in(dir / "eval" / "report.json");
  auto report = metrics::MetricReport::from_json(nlohmann::json::parse(in));
  auto mean = [&](const char* cond, const char* metric) { return report.find(cond)->summary(metric)->mean; };
  const double snr_b = mean("Baseline", "snr_db"), snr_c = mean("N2C", "snr_db"), snr_n = mean("N2N", "snr_db");
  const double stoi_b = mean("Baseline", "stoi"), stoi_c = mean("N2C", "stoi"), stoi_n = mean("N2N", "stoi");
  const double dt = seconds_since(t0);
  const bool a = snr_c - snr_b >= 3.0 && snr_n - snr_b >= 3.0;
  const bool b = std::abs(snr_c - snr_n) <= 1.5;
  const bool c = stoi_c > stoi_b && stoi_n > stoi_b;
  return {a && b && c && dt <= 1800.0,
          fmt::format("{} steps/mode; SNR Baseline {:.2f} / N2C {:.2f} / N2N {:.2f} dB (gap {:.2f}); STOI {:.3f} / "
                      "{:.3f} / {:.3f}; {:.0f} s",
                      kE2eSteps, snr_b, snr_c, snr_n, std::abs(snr_c - snr_n), stoi_b, stoi_c, stoi_n, dt)};
}

// ---------------------------------------------------------------------------

Outcome determinism(const fs::path& work) {
  const auto dir = work / "determinism";
  fs::remove_all(dir);
  auto p = [&](const std::string& s) { return (dir / s).string(); };
  if (cli({"synth", "--out", p("clean"), "--count", "6", "--seconds", "0.5", "--seed", "8"}) != 0)
    return {false, "synth failed"};
  testing::write_noise_tree(dir / "noise", 16000, 9);
  // Artifacts record their own --out, so each pair of runs shares one path.
  auto twice = [&](const std::vector<std::string>& args, const std::string& out) {
    auto full = args;
    full.push_back("--out");
    full.push_back(p(out));
    if (cli(full) != 0) return false;
    fs::rename(dir / out, dir / (out + ".first"));
    if (cli(full) != 0) return false;
    return testing::trees_identical(dir / (out + ".first"), dir / out);
  };
  const bool mix_white = twice({"--seed", "42", "mix", "--clean-dir", p("clean"), "--mode", "white", "--count", "8"},
                               "mix_white");
  const bool mix_cat = twice({"--seed", "42", "mix", "--clean-dir", p("clean"), "--noise-dir", p("noise"), "--mode",
                              "mixed", "--count", "8", "--encoding", "pcm16"},
                             "mix_cat");
  const bool train = twice({"--seed", "42", "--precision", "64", "train", "--manifest", p("mix_cat/manifest.jsonl"),
                            "--max-steps", "3", "--crop", "4096", "--log-every", "0"},
                           "train");
  fs::remove_all(dir);
  return {mix_white && mix_cat && train,
          fmt::format("mix (white) identical: {}; mix (categories, pcm16) identical: {}; 64-bit train identical: {}",
                      mix_white ? "yes" : "no", mix_cat ? "yes" : "no", train ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  fs::path work = fs::temp_directory_path() / ("n2n_acceptance_" + std::to_string(::getpid()));
  bool own_work = true;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
      own_work = false;
    } else {
      selected.insert(std::stoi(a));
    }
  }
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"transform suite", transform_suite},
      {"complex-op oracle suite", oracle_suite},
      {"gradient suite", gradient_suite},
      {"loss suite", loss_suite},
      {"theory suite", theory_suite},
      {"mixgen suite", [&] { return mixgen_suite(work); }},
      {"metrics suite", metrics_suite},
      {"desk-scale end-to-end", [&] { return end_to_end(work); }},
      {"determinism", [&] { return determinism(work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << fmt::format("[{}] {} {}: {}", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail)
              << std::endl;
  }
  if (own_work) {
    std::error_code ec;
    fs::remove_all(work, ec);
  }
  return failed;
}
