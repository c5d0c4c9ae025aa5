// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#pragma once

#include <array>
#include <memory>
#include <utility>

#include "n2n/cx/autograd.h"
#include "n2n/rng.h"

namespace n2n::spectral {
class StftEngine;
}

namespace n2n::cx {

// Complex activation tensor with logical shape [B, C, H, W].
//
// Storage is a single real tensor [B, 2C, H, W]: channels [0, C) hold the
// real planes and [C, 2C) the imaginary planes. This makes a complex
// convolution one real convolution with the block kernel
//   [[W_re, -W_im],
//    [W_im,  W_re]].
template <typename T>
struct ComplexTensor {
  Var<T> storage;

  std::int64_t batch() const { return storage.shape()[0]; }
  std::int64_t channels() const { return storage.shape()[1] / 2; }
  std::int64_t height() const { return storage.shape()[2]; }
  std::int64_t width() const { return storage.shape()[3]; }
  Shape shape() const { return {batch(), channels(), height(), width()}; }
  std::int64_t plane_size() const { return height() * width(); }
  bool requires_grad() const { return storage.requires_grad(); }

  // Copies of the real / imaginary parts, shape [B, C, H, W].
  Tensor<T> real() const;
  Tensor<T> imag() const;

  static ComplexTensor from_parts(const Tensor<T>& re, const Tensor<T>& im, bool requires_grad = false);
  static ComplexTensor zeros(const Shape& logical, bool requires_grad = false);
};

// Complex convolution parameters. Forward conv kernels are
// [C_out, C_in, kH, kW]; transposed-conv kernels are [C_in, C_out, kH, kW].
template <typename T>
struct ComplexConvWeights {
  Var<T> w_real;
  Var<T> w_imag;
  Var<T> b_real;  // [C_out]
  Var<T> b_imag;
};

using Pair = std::array<int, 2>;

// A complex (transposed) convolution with its geometry. Kernel shape is
// [C_out, C_in, kH, kW] for forward layers and [C_in, C_out, kH, kW] for
// transposed ones.
template <typename T>
struct ComplexConvLayer {
  ComplexConvWeights<T> weights;
  Pair stride{1, 1};
  Pair padding{0, 0};
  bool transposed = false;

  // Kernels from init_complex_weights, zero bias; all marked trainable.
  static ComplexConvLayer create(std::int64_t in_channels, std::int64_t out_channels, Pair kernel, Pair stride,
                                 Pair padding, bool transposed, Rng& rng);
};

// Output size of a strided convolution along one axis.
inline std::int64_t conv_out_size(std::int64_t in, int k, int s, int p) {
  return (in + 2 * p - k) / s + 1;
}
// Output size of a transposed convolution along one axis.
inline std::int64_t conv_transpose_out_size(std::int64_t in, int k, int s, int p, int output_pad) {
  return (in - 1) * s - 2 * p + k + output_pad;
}

template <typename T>
ComplexTensor<T> complex_conv2d(const ComplexTensor<T>& x, const ComplexConvWeights<T>& w, Pair stride,
                                Pair padding);

template <typename T>
ComplexTensor<T> complex_conv_transpose2d(const ComplexTensor<T>& x, const ComplexConvWeights<T>& w,
                                          Pair stride, Pair padding, Pair output_padding);

// Leaky ReLU on real and imaginary parts independently. slope in [0, 1].
template <typename T>
ComplexTensor<T> lecrelu(const ComplexTensor<T>& x, T slope);

// Channel-wise concatenation [B, Ca] ++ [B, Cb] -> [B, Ca + Cb].
template <typename T>
ComplexTensor<T> concat_channels(const ComplexTensor<T>& a, const ComplexTensor<T>& b);

// Elementwise complex product.
template <typename T>
ComplexTensor<T> complex_mul(const ComplexTensor<T>& a, const ComplexTensor<T>& b);

// Bounded polar mask tanh(|o|) * o / |o|, defined as 0 where |o| < 1e-12.
template <typename T>
ComplexTensor<T> polar_mask(const ComplexTensor<T>& o);

// Per-channel complex batch normalization with 2x2 covariance whitening.
// Learnable: symmetric gamma (rr, ri, ii) and complex beta, each [C].
// Running statistics are plain buffers updated in training mode as
// running = momentum * running + (1 - momentum) * batch.
template <typename T>
struct ComplexBatchNorm {
  Var<T> gamma_rr, gamma_ri, gamma_ii;
  Var<T> beta_r, beta_i;
  Tensor<T> running_mean_r, running_mean_i;
  Tensor<T> running_vrr, running_vri, running_vii;
  double eps = 1e-5;
  double momentum = 0.9;

  // gamma = diag(1/sqrt(2)), beta = 0, running mean 0, running covariance I.
  static ComplexBatchNorm create(std::int64_t channels);
};

template <typename T>
ComplexTensor<T> complex_batch_norm(const ComplexTensor<T>& x, ComplexBatchNorm<T>& bn, bool training);

// Same whitening, with gamma = I and beta = 0 and no running-stat update;
// exposed so the whitening contract can be checked on its own.
template <typename T>
ComplexTensor<T> complex_whiten(const ComplexTensor<T>& x, double eps = 1e-5);

// Inverse STFT of a one-channel complex spectrogram batch [B, 1, F, T]
// into waveforms [B, L], differentiable w.r.t. the spectrogram.
template <typename T>
Var<T> istft(const ComplexTensor<T>& spec, std::shared_ptr<spectral::StftEngine> engine);

// Complex He-style initialization: |w| ~ Rayleigh(1 / sqrt(fan_in)),
// arg(w) ~ U(-pi, pi). fan_in = shape[1] * prod(shape[2:]).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> init_complex_weights(const Shape& shape, Rng& rng);

}  // namespace n2n::cx
