// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "n2n/audio.h"
#include "n2n/checkpoint.h"
#include "n2n/cx/complex.h"
#include "n2n/spectral.h"

namespace n2n::dcunet {

struct EncoderLayerSpec {
  cx::Pair kernel{3, 3};  // (freq, time)
  cx::Pair stride{1, 1};
  int out_channels = 1;
};

// Encoder stack; the decoder mirrors it in reverse with transposed convs.
// Kernels must be odd so that "same" padding (k-1)/2 is symmetric: every
// encoder stage maps n -> ceil(n / stride) and the matching decoder stage
// restores n exactly.
struct ArchitectureSpec {
  std::vector<EncoderLayerSpec> encoder;
  double leaky_slope = 0.01;
  int freq_bins = 257;

  void validate() const;
  // Spatial dims after each encoder stage, starting with the input.
  std::vector<cx::Pair> encoder_dims(int frames) const;

  // 10 layers (5 down, 5 up) for a 512-point FFT.
  static ArchitectureSpec desk();
  // 20 layers (10 down, 10 up) in the DCUnet-20 layout.
  static ArchitectureSpec dcunet20(int freq_bins = 1537);

  nlohmann::json to_json() const;
  static ArchitectureSpec from_json(const nlohmann::json& j);
  // Accepts either a bare architecture object or one nested under "arch".
  static ArchitectureSpec load(const std::filesystem::path& path);
};

// All trainable tensors and running statistics of the network.
template <typename T>
class ModelParameters {
 public:
  ModelParameters(ArchitectureSpec spec, std::uint64_t seed);

  const ArchitectureSpec& spec() const { return spec_; }

  struct NamedVar {
    std::string name;
    cx::Var<T>* var;
  };
  struct NamedBuffer {
    std::string name;
    cx::Tensor<T>* tensor;
  };
  // Stable order; names are unique.
  std::vector<NamedVar> parameters();
  std::vector<NamedBuffer> buffers();
  std::int64_t parameter_count();

  std::vector<cx::ComplexConvLayer<T>>& encoder_convs() { return enc_conv_; }
  std::vector<cx::ComplexBatchNorm<T>>& encoder_norms() { return enc_bn_; }
  std::vector<cx::ComplexConvLayer<T>>& decoder_convs() { return dec_conv_; }
  // One fewer than decoder_convs(): the last decoder stage has no norm.
  std::vector<cx::ComplexBatchNorm<T>>& decoder_norms() { return dec_bn_; }

 private:
  ArchitectureSpec spec_;
  std::vector<cx::ComplexConvLayer<T>> enc_conv_;
  std::vector<cx::ComplexBatchNorm<T>> enc_bn_;
  std::vector<cx::ComplexConvLayer<T>> dec_conv_;
  std::vector<cx::ComplexBatchNorm<T>> dec_bn_;
};

// Encoder: conv -> BN -> leaky CReLU. Decoder stage j > 0 consumes the
// previous decoder output concatenated with the mirrored encoder output.
// The last stage emits the 1-channel mask logits with no BN/activation.
// x is [B, 1, F, T]; the result has the same shape.
template <typename T>
cx::ComplexTensor<T> forward(const cx::ComplexTensor<T>& x, ModelParameters<T>& params, bool training);

// tanh(|O|) * O / |O|, 0 where O = 0.
template <typename T>
cx::ComplexTensor<T> estimate_mask(const cx::ComplexTensor<T>& logits);

template <typename T>
cx::ComplexTensor<T> apply_mask(const cx::ComplexTensor<T>& mask, const cx::ComplexTensor<T>& spec);

// Packs spectrograms of equal geometry into a [B, 1, F, T] tensor.
template <typename T>
cx::ComplexTensor<T> to_tensor(const std::vector<spectral::ComplexSpectrogram>& specs);

// stft -> forward -> mask -> apply -> istft; output has the input length.
template <typename T>
audio::Waveform denoise(const audio::Waveform& w, ModelParameters<T>& params, const spectral::StftConfig& cfg);

// Model tensors are stored as "model/<name>" in the precision of T, with
// {"arch", "stft", "precision"} in the container meta.
template <typename T>
void export_to(checkpoint::Container& c, ModelParameters<T>& params, const spectral::StftConfig& cfg);
template <typename T>
void import_from(const checkpoint::Container& c, ModelParameters<T>& params);

nlohmann::json stft_to_json(const spectral::StftConfig& cfg);
spectral::StftConfig stft_from_json(const nlohmann::json& j);

// Inference bundle restored from any checkpoint file written by this
// library (model export or training state).
template <typename T>
struct LoadedModel {
  std::unique_ptr<ModelParameters<T>> params;
  spectral::StftConfig stft;
};
template <typename T>
LoadedModel<T> load_model(const std::filesystem::path& path);
template <typename T>
void save_model(const std::filesystem::path& path, ModelParameters<T>& params, const spectral::StftConfig& cfg);

}  // namespace n2n::dcunet
