// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#include <cmath>
#include <fstream>
#include <set>

#include "doctest.h"
#include "n2n/checkpoint.h"
#include "n2n/dcunet.h"
#include "n2n/error.h"
#include "support.h"

using namespace n2n;
using cx::ComplexTensor;
using cx::Tensor;
using dcunet::ArchitectureSpec;

namespace {

ArchitectureSpec tiny_spec() {
  ArchitectureSpec s;
  s.freq_bins = 9;
  s.encoder = {{{3, 3}, {2, 2}, 2}, {{3, 3}, {2, 1}, 3}};
  return s;
}

ComplexTensor<double> scalar_tensor(double re, double im) {
  return ComplexTensor<double>::from_parts(Tensor<double>({1, 1, 1, 1}, re), Tensor<double>({1, 1, 1, 1}, im));
}

}  // namespace

TEST_SUITE("dcunet") {

TEST_CASE("spec validation and geometry") {
  auto s = ArchitectureSpec::desk();
  CHECK_NOTHROW(s.validate());
  auto dims = s.encoder_dims(126);
  REQUIRE(dims.size() == 6);
  CHECK(dims[0] == cx::Pair{257, 126});
  CHECK(dims[1] == cx::Pair{129, 63});
  auto bad = s;
  bad.encoder[0].kernel = {4, 3};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  bad.encoder[0].stride = {0, 1};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(ArchitectureSpec::dcunet20().encoder.size() == 10);
  CHECK(ArchitectureSpec::dcunet20().freq_bins == 1537);
  CHECK(ArchitectureSpec::from_json(s.to_json()).to_json() == s.to_json());
}

TEST_CASE("shipped configs equal the presets") {
  const std::filesystem::path dir = N2N_SOURCE_DIR "/configs";
  CHECK(ArchitectureSpec::load(dir / "desk.json").to_json() == ArchitectureSpec::desk().to_json());
  CHECK(ArchitectureSpec::load(dir / "dcunet20.json").to_json() == ArchitectureSpec::dcunet20().to_json());
}

TEST_CASE("parameter names are unique and shapes follow the spec") {
  dcunet::ModelParameters<float> p(ArchitectureSpec::desk(), 1);
  std::set<std::string> names;
  for (auto& np : p.parameters()) CHECK(names.insert(np.name).second);
  for (auto& nb : p.buffers()) CHECK(names.insert(nb.name).second);
  CHECK(p.encoder_convs().size() == 5);
  CHECK(p.decoder_convs().size() == 5);
  CHECK(p.decoder_norms().size() == 4);
  CHECK(p.encoder_convs()[0].weights.w_real.shape() == cx::Shape{32, 1, 7, 5});
  CHECK(p.decoder_convs().back().weights.w_real.shape() == cx::Shape{64, 1, 7, 5});
}

TEST_CASE("forward keeps the input shape and stays finite") {
  Rng rng(1);
  dcunet::ModelParameters<double> p(ArchitectureSpec::desk(), 2);
  for (int frames : {17, 40}) {
    auto x = testing::random_complex({2, 1, 257, frames}, rng);
    auto y = dcunet::forward(x, p, true);
    CHECK(y.shape() == x.shape());
    for (double v : y.storage.value().data) CHECK(std::isfinite(v));
  }
}

TEST_CASE("same seed, same weights") {
  dcunet::ModelParameters<float> a(ArchitectureSpec::desk(), 9), b(ArchitectureSpec::desk(), 9);
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].var->value().data == pb[i].var->value().data);
}

TEST_CASE("mask examples") {
  auto zero = dcunet::estimate_mask(scalar_tensor(0, 0));
  CHECK(zero.real().data[0] == 0.0);
  CHECK(zero.imag().data[0] == 0.0);
  auto half = dcunet::estimate_mask(scalar_tensor(0.5, 0));
  CHECK(half.real().data[0] == doctest::Approx(0.46212).epsilon(1e-5));
  CHECK(half.imag().data[0] == 0.0);
  auto big = dcunet::estimate_mask(scalar_tensor(30, -40));
  CHECK(std::hypot(big.real().data[0], big.imag().data[0]) == doctest::Approx(1.0));
  Rng rng(2);
  Tensor<double> re = testing::random_tensor({1, 1, 20, 20}, rng, -20, 20);
  Tensor<double> im = testing::random_tensor({1, 1, 20, 20}, rng, -20, 20);
  auto m = dcunet::estimate_mask(ComplexTensor<double>::from_parts(re, im));
  auto mr = m.real(), mi = m.imag();
  for (std::size_t i = 0; i < mr.data.size(); ++i) {
    CHECK(std::hypot(mr.data[i], mi.data[i]) <= 1.0 + 1e-12);
    // Phase of the logits is kept.
    CHECK(std::atan2(mi.data[i], mr.data[i]) == doctest::Approx(std::atan2(im.data[i], re.data[i])));
  }
}

TEST_CASE("applying a mask") {
  Rng rng(3);
  auto x = testing::random_complex({1, 1, 6, 6}, rng);
  auto ones = ComplexTensor<double>::from_parts(Tensor<double>({1, 1, 6, 6}, 1.0), Tensor<double>({1, 1, 6, 6}));
  CHECK(dcunet::apply_mask(ones, x).storage.value().data == x.storage.value().data);
  auto i_mask = ComplexTensor<double>::from_parts(Tensor<double>({1, 1, 6, 6}), Tensor<double>({1, 1, 6, 6}, 1.0));
  auto rot = dcunet::apply_mask(i_mask, x);
  for (std::size_t k = 0; k < 36; ++k) {
    CHECK(rot.real().data[k] == -x.imag().data[k]);
    CHECK(rot.imag().data[k] == x.real().data[k]);
  }
  auto m = testing::random_complex({1, 1, 6, 6}, rng);
  auto y = dcunet::apply_mask(m, x);
  for (std::size_t k = 0; k < 36; ++k) {
    std::complex<double> zm(m.real().data[k], m.imag().data[k]), zx(x.real().data[k], x.imag().data[k]);
    auto polar = std::polar(std::abs(zm) * std::abs(zx), std::arg(zm) + std::arg(zx));
    CHECK(std::abs(y.real().data[k] - polar.real()) < 1e-9);
    CHECK(std::abs(y.imag().data[k] - polar.imag()) < 1e-9);
  }
}

TEST_CASE("denoise preserves length and zero logits silence the output") {
  Rng rng(4);
  audio::Waveform w;
  w.samples = testing::gaussian(16000, rng, 0.1);
  dcunet::ModelParameters<float> p(ArchitectureSpec::desk(), 3);
  auto out = dcunet::denoise(w, p, spectral::StftConfig::desk());
  CHECK(out.size() == w.size());
  CHECK(out.sample_rate == w.sample_rate);
  bool nonzero = false;
  for (double v : out.samples) {
    CHECK(std::isfinite(v));
    nonzero = nonzero || v != 0.0;
  }
  CHECK(nonzero);
  auto& last = p.decoder_convs().back().weights;
  for (auto* v : {&last.w_real, &last.w_imag, &last.b_real, &last.b_imag})
    std::fill(v->mutable_value().data.begin(), v->mutable_value().data.end(), 0.0f);
  auto silent = dcunet::denoise(w, p, spectral::StftConfig::desk());
  for (double v : silent.samples) CHECK(v == 0.0);
  CHECK_THROWS_AS(dcunet::denoise(w, p, spectral::StftConfig{256, 64}), ConfigError);
}

TEST_CASE("network gradients match finite differences") {
  Rng rng(5);
  dcunet::ModelParameters<double> p(tiny_spec(), 6);
  auto x = testing::random_complex({2, 1, 9, 5}, rng, true);
  // Perturb BN affine terms away from their symmetric init.
  for (auto& np : p.parameters())
    for (auto& v : np.var->mutable_value().data) v += rng.uniform(-0.2, 0.2);
  auto r = testing::check_network_gradients(p, x);
  CHECK(r.max_rel_error < 1e-4);
  CHECK(r.max_abs_pre_norm_bias_grad < 1e-10);
}

TEST_CASE("model checkpoints round-trip bit-exactly") {
  testing::TempDir dir("dcunet");
  dcunet::ModelParameters<float> p(ArchitectureSpec::desk(), 7);
  p.encoder_norms()[0].running_vrr.data[0] = 1.25f;
  dcunet::save_model(dir / "m.ckpt", p, spectral::StftConfig::desk());
  auto loaded = dcunet::load_model<float>(dir / "m.ckpt");
  CHECK(loaded.stft.fft_size == 512);
  CHECK(loaded.stft.hop == 128);
  auto a = p.parameters(), b = loaded.params->parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].var->value().data == b[i].var->value().data);
  auto ba = p.buffers(), bb = loaded.params->buffers();
  for (std::size_t i = 0; i < ba.size(); ++i) CHECK(ba[i].tensor->data == bb[i].tensor->data);
  // Widening to 64-bit is lossless.
  auto wide = dcunet::load_model<double>(dir / "m.ckpt");
  CHECK(wide.params->parameters()[3].var->value().data[0] == static_cast<double>(a[3].var->value().data[0]));

  dcunet::ModelParameters<double> pd(tiny_spec(), 8);
  dcunet::save_model(dir / "d.ckpt", pd, spectral::StftConfig{16, 4});
  auto ld = dcunet::load_model<double>(dir / "d.ckpt");
  CHECK(ld.params->parameters()[0].var->value().data == pd.parameters()[0].var->value().data);
}

TEST_CASE("damaged checkpoints are rejected") {
  testing::TempDir dir("dcunet");
  dcunet::ModelParameters<float> p(ArchitectureSpec::desk(), 7);
  dcunet::save_model(dir / "m.ckpt", p, spectral::StftConfig::desk());
  std::string bytes = testing::read_bytes(dir / "m.ckpt");
  std::ofstream(dir / "trunc.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 100);
  CHECK_THROWS_AS(checkpoint::load(dir / "trunc.ckpt"), IntegrityError);
  std::string flipped = bytes;
  flipped[flipped.size() - 10] = static_cast<char>(flipped[flipped.size() - 10] ^ 0x40);
  std::ofstream(dir / "flip.ckpt", std::ios::binary) << flipped;
  CHECK_THROWS_AS(checkpoint::load(dir / "flip.ckpt"), IntegrityError);
  std::ofstream(dir / "magic.ckpt", std::ios::binary) << "NOTACKPT" << bytes.substr(8);
  CHECK_THROWS_AS(checkpoint::load(dir / "magic.ckpt"), IntegrityError);
  CHECK_THROWS_AS(dcunet::load_model<float>(dir / "absent.ckpt"), Error);
}

}
