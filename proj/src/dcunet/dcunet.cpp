// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#include "n2n/dcunet.h"

#include <fstream>

#include "n2n/error.h"

namespace n2n::dcunet {

using cx::ComplexTensor;
using cx::Pair;

namespace {

Pair same_padding(Pair kernel) { return {(kernel[0] - 1) / 2, (kernel[1] - 1) / 2}; }

std::int64_t down(std::int64_t n, int stride, int kernel) {
  const int pad = (kernel - 1) / 2;
  return cx::conv_out_size(n, kernel, stride, pad);
}

}  // namespace

void ArchitectureSpec::validate() const {
  if (encoder.empty()) throw ConfigError("architecture: encoder must have at least one layer");
  if (freq_bins < 1) throw ConfigError("architecture: freq_bins must be positive");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("architecture: leaky_slope must be in [0, 1)");
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    const auto& l = encoder[i];
    const std::string where = "architecture: encoder layer " + std::to_string(i);
    for (int a = 0; a < 2; ++a) {
      if (l.kernel[a] < 1 || l.kernel[a] % 2 == 0) throw ConfigError(where + " kernel dims must be odd and positive");
      if (l.stride[a] < 1) throw ConfigError(where + " stride must be >= 1");
    }
    if (l.out_channels < 1) throw ConfigError(where + " out_channels must be positive");
  }
}

std::vector<Pair> ArchitectureSpec::encoder_dims(int frames) const {
  std::vector<Pair> dims{{freq_bins, frames}};
  for (const auto& l : encoder) {
    const Pair& prev = dims.back();
    dims.push_back({static_cast<int>(down(prev[0], l.stride[0], l.kernel[0])),
                    static_cast<int>(down(prev[1], l.stride[1], l.kernel[1]))});
  }
  // Each transposed stage must land exactly on the mirrored encoder dims.
  for (std::size_t i = encoder.size(); i-- > 0;) {
    for (int a = 0; a < 2; ++a) {
      const int k = encoder[i].kernel[a], s = encoder[i].stride[a];
      const auto base = cx::conv_transpose_out_size(dims[i + 1][a], k, s, (k - 1) / 2, 0);
      const auto extra = dims[i][a] - base;
      if (extra < 0 || extra >= s) {
        throw ConfigError("architecture: decoder stage for encoder layer " + std::to_string(i) +
                          " cannot restore size " + std::to_string(dims[i][a]));
      }
    }
  }
  return dims;
}

ArchitectureSpec ArchitectureSpec::desk() {
  ArchitectureSpec s;
  s.freq_bins = 257;
  s.encoder = {{{7, 5}, {2, 2}, 32}, {{7, 5}, {2, 1}, 32}, {{5, 3}, {2, 2}, 64},
               {{5, 3}, {2, 1}, 64}, {{5, 3}, {2, 2}, 64}};
  return s;
}

ArchitectureSpec ArchitectureSpec::dcunet20(int freq_bins) {
  ArchitectureSpec s;
  s.freq_bins = freq_bins;
  s.encoder = {{{7, 1}, {1, 1}, 45}, {{1, 7}, {1, 1}, 45}, {{7, 5}, {2, 2}, 90}, {{7, 5}, {2, 1}, 90},
               {{5, 3}, {2, 2}, 90}, {{5, 3}, {2, 1}, 90}, {{5, 3}, {2, 2}, 90}, {{5, 3}, {2, 1}, 90},
               {{5, 3}, {2, 2}, 90}, {{5, 3}, {2, 1}, 90}};
  return s;
}

nlohmann::json ArchitectureSpec::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : encoder) {
    layers.push_back({{"kernel", l.kernel}, {"stride", l.stride}, {"out_channels", l.out_channels}});
  }
  return {{"encoder", layers}, {"leaky_slope", leaky_slope}, {"freq_bins", freq_bins}};
}

ArchitectureSpec ArchitectureSpec::from_json(const nlohmann::json& j) {
  ArchitectureSpec s;
  try {
    for (const auto& l : j.at("encoder")) {
      s.encoder.push_back({l.at("kernel").get<Pair>(), l.at("stride").get<Pair>(), l.at("out_channels").get<int>()});
    }
    s.leaky_slope = j.value("leaky_slope", 0.01);
    s.freq_bins = j.at("freq_bins").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("architecture: ") + e.what());
  }
  s.validate();
  return s;
}

ArchitectureSpec ArchitectureSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open architecture file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("architecture file " + path.string() + ": " + e.what());
  }
  return from_json(j.contains("arch") ? j.at("arch") : j);
}

template <typename T>
ModelParameters<T>::ModelParameters(ArchitectureSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(seed);
  const auto& enc = spec_.encoder;
  const std::size_t depth = enc.size();
  int in_ch = 1;
  for (const auto& l : enc) {
    enc_conv_.push_back(
        cx::ComplexConvLayer<T>::create(in_ch, l.out_channels, l.kernel, l.stride, same_padding(l.kernel), false, rng));
    enc_bn_.push_back(cx::ComplexBatchNorm<T>::create(l.out_channels));
    in_ch = l.out_channels;
  }
  for (std::size_t j = 0; j < depth; ++j) {
    const auto& mirror = enc[depth - 1 - j];
    const int from = j == 0 ? mirror.out_channels : 2 * mirror.out_channels;
    const bool last = j + 1 == depth;
    const int to = last ? 1 : enc[depth - 2 - j].out_channels;
    dec_conv_.push_back(
        cx::ComplexConvLayer<T>::create(from, to, mirror.kernel, mirror.stride, same_padding(mirror.kernel), true, rng));
    if (!last) dec_bn_.push_back(cx::ComplexBatchNorm<T>::create(to));
  }
}

template <typename T>
std::vector<typename ModelParameters<T>::NamedVar> ModelParameters<T>::parameters() {
  std::vector<NamedVar> out;
  auto conv = [&](const std::string& p, cx::ComplexConvLayer<T>& l) {
    out.push_back({p + ".w_real", &l.weights.w_real});
    out.push_back({p + ".w_imag", &l.weights.w_imag});
    out.push_back({p + ".b_real", &l.weights.b_real});
    out.push_back({p + ".b_imag", &l.weights.b_imag});
  };
  auto norm = [&](const std::string& p, cx::ComplexBatchNorm<T>& b) {
    out.push_back({p + ".gamma_rr", &b.gamma_rr});
    out.push_back({p + ".gamma_ri", &b.gamma_ri});
    out.push_back({p + ".gamma_ii", &b.gamma_ii});
    out.push_back({p + ".beta_r", &b.beta_r});
    out.push_back({p + ".beta_i", &b.beta_i});
  };
  for (std::size_t i = 0; i < enc_conv_.size(); ++i) {
    conv("enc" + std::to_string(i) + ".conv", enc_conv_[i]);
    norm("enc" + std::to_string(i) + ".bn", enc_bn_[i]);
  }
  for (std::size_t j = 0; j < dec_conv_.size(); ++j) {
    conv("dec" + std::to_string(j) + ".conv", dec_conv_[j]);
    if (j < dec_bn_.size()) norm("dec" + std::to_string(j) + ".bn", dec_bn_[j]);
  }
  return out;
}

template <typename T>
std::vector<typename ModelParameters<T>::NamedBuffer> ModelParameters<T>::buffers() {
  std::vector<NamedBuffer> out;
  auto norm = [&](const std::string& p, cx::ComplexBatchNorm<T>& b) {
    out.push_back({p + ".running_mean_r", &b.running_mean_r});
    out.push_back({p + ".running_mean_i", &b.running_mean_i});
    out.push_back({p + ".running_vrr", &b.running_vrr});
    out.push_back({p + ".running_vri", &b.running_vri});
    out.push_back({p + ".running_vii", &b.running_vii});
  };
  for (std::size_t i = 0; i < enc_bn_.size(); ++i) norm("enc" + std::to_string(i) + ".bn", enc_bn_[i]);
  for (std::size_t j = 0; j < dec_bn_.size(); ++j) norm("dec" + std::to_string(j) + ".bn", dec_bn_[j]);
  return out;
}

template <typename T>
std::int64_t ModelParameters<T>::parameter_count() {
  std::int64_t n = 0;
  for (const auto& p : parameters()) n += p.var->numel();
  return n;
}

template <typename T>
ComplexTensor<T> forward(const ComplexTensor<T>& x, ModelParameters<T>& params, bool training) {
  const auto& spec = params.spec();
  if (x.channels() != 1 || x.height() != spec.freq_bins) {
    throw ConfigError("dcunet forward: expected [B, 1, " + std::to_string(spec.freq_bins) + ", T], got " +
                      cx::to_string(x.shape()));
  }
  const auto dims = spec.encoder_dims(static_cast<int>(x.width()));
  const T slope = static_cast<T>(spec.leaky_slope);
  const std::size_t depth = spec.encoder.size();

  std::vector<ComplexTensor<T>> skips;
  ComplexTensor<T> h = x;
  for (std::size_t i = 0; i < depth; ++i) {
    const auto& conv = params.encoder_convs()[i];
    h = cx::complex_conv2d(h, conv.weights, conv.stride, conv.padding);
    h = cx::complex_batch_norm(h, params.encoder_norms()[i], training);
    h = cx::lecrelu(h, slope);
    skips.push_back(h);
  }
  for (std::size_t j = 0; j < depth; ++j) {
    const std::size_t mirror = depth - 1 - j;
    if (j > 0) h = cx::concat_channels(h, skips[mirror]);
    const auto& conv = params.decoder_convs()[j];
    const Pair target = dims[mirror];
    Pair out_pad{};
    for (int a = 0; a < 2; ++a) {
      const auto in = a == 0 ? h.height() : h.width();
      out_pad[a] = static_cast<int>(
          target[a] - cx::conv_transpose_out_size(in, static_cast<int>(conv.weights.w_real.shape()[2 + a]),
                                                  conv.stride[a], conv.padding[a], 0));
    }
    h = cx::complex_conv_transpose2d(h, conv.weights, conv.stride, conv.padding, out_pad);
    if (j + 1 < depth) {
      h = cx::complex_batch_norm(h, params.decoder_norms()[j], training);
      h = cx::lecrelu(h, slope);
    }
  }
  return h;
}

template <typename T>
ComplexTensor<T> estimate_mask(const ComplexTensor<T>& logits) {
  return cx::polar_mask(logits);
}

template <typename T>
ComplexTensor<T> apply_mask(const ComplexTensor<T>& mask, const ComplexTensor<T>& spec) {
  return cx::complex_mul(mask, spec);
}

template <typename T>
ComplexTensor<T> to_tensor(const std::vector<spectral::ComplexSpectrogram>& specs) {
  if (specs.empty()) throw ConfigError("to_tensor: empty batch");
  const auto f = specs[0].bins, t = specs[0].frames;
  const std::int64_t plane = static_cast<std::int64_t>(f) * t;
  const auto batch = static_cast<std::int64_t>(specs.size());
  cx::Tensor<T> st({batch, 2, f, t});
  for (std::int64_t b = 0; b < batch; ++b) {
    const auto& s = specs[static_cast<std::size_t>(b)];
    if (s.bins != f || s.frames != t) throw ConfigError("to_tensor: spectrogram shapes differ within batch");
    std::transform(s.real.begin(), s.real.end(), st.data.begin() + b * 2 * plane,
                   [](double v) { return static_cast<T>(v); });
    std::transform(s.imag.begin(), s.imag.end(), st.data.begin() + b * 2 * plane + plane,
                   [](double v) { return static_cast<T>(v); });
  }
  return {cx::Var<T>::leaf(std::move(st))};
}

template <typename T>
audio::Waveform denoise(const audio::Waveform& w, ModelParameters<T>& params, const spectral::StftConfig& cfg) {
  if (cfg.bins() != params.spec().freq_bins) {
    throw ConfigError("denoise: model expects " + std::to_string(params.spec().freq_bins) + " bins, STFT gives " +
                      std::to_string(cfg.bins()));
  }
  auto engine = std::make_shared<spectral::StftEngine>(cfg, w.samples.size());
  spectral::ComplexSpectrogram s;
  s.bins = engine->bins();
  s.frames = engine->frames();
  s.real.resize(engine->plane_size());
  s.imag.resize(engine->plane_size());
  engine->forward(w.samples, s.real, s.imag);
  const auto x = to_tensor<T>({s});
  const auto logits = forward(x, params, false);
  const auto y = apply_mask(estimate_mask(logits), x);
  const auto wave = cx::istft(y, engine);
  audio::Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(wave.value().data.begin(), wave.value().data.end());
  return out;
}

nlohmann::json stft_to_json(const spectral::StftConfig& cfg) {
  return {{"fft_size", cfg.fft_size}, {"hop", cfg.hop}, {"window", "hann"}, {"center_pad", cfg.center_pad}};
}

spectral::StftConfig stft_from_json(const nlohmann::json& j) {
  spectral::StftConfig cfg;
  try {
    cfg.fft_size = j.at("fft_size").get<int>();
    cfg.hop = j.at("hop").get<int>();
    cfg.center_pad = j.value("center_pad", true);
    if (j.value("window", std::string("hann")) != "hann") throw ConfigError("stft: only the hann window is supported");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("stft config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

template <typename T>
void export_to(checkpoint::Container& c, ModelParameters<T>& params, const spectral::StftConfig& cfg) {
  const auto dtype = sizeof(T) == 4 ? checkpoint::Dtype::kFloat32 : checkpoint::Dtype::kFloat64;
  c.meta["arch"] = params.spec().to_json();
  c.meta["stft"] = stft_to_json(cfg);
  c.meta["precision"] = sizeof(T) == 4 ? 32 : 64;
  for (const auto& p : params.parameters()) {
    const auto& v = p.var->value();
    c.tensors.push_back({"model/" + p.name, v.shape, dtype, {v.data.begin(), v.data.end()}});
  }
  for (const auto& b : params.buffers()) {
    c.tensors.push_back({"model/" + b.name, b.tensor->shape, dtype, {b.tensor->data.begin(), b.tensor->data.end()}});
  }
}

template <typename T>
void import_from(const checkpoint::Container& c, ModelParameters<T>& params) {
  auto copy_into = [&](const std::string& name, cx::Tensor<T>& dst) {
    const auto& rec = c.at("model/" + name);
    if (rec.shape != dst.shape) {
      throw FormatError("checkpoint: tensor '" + name + "' has shape " + cx::to_string(rec.shape) + ", model expects " +
                        cx::to_string(dst.shape));
    }
    std::transform(rec.values.begin(), rec.values.end(), dst.data.begin(), [](double v) { return static_cast<T>(v); });
  };
  for (const auto& p : params.parameters()) copy_into(p.name, p.var->mutable_value());
  for (const auto& b : params.buffers()) copy_into(b.name, *b.tensor);
}

template <typename T>
LoadedModel<T> load_model(const std::filesystem::path& path) {
  const auto c = checkpoint::load(path);
  if (!c.meta.contains("arch") || !c.meta.contains("stft")) {
    throw FormatError("checkpoint " + path.string() + " has no model description");
  }
  LoadedModel<T> m;
  m.params = std::make_unique<ModelParameters<T>>(ArchitectureSpec::from_json(c.meta["arch"]), 0);
  m.stft = stft_from_json(c.meta["stft"]);
  import_from(c, *m.params);
  return m;
}

template <typename T>
void save_model(const std::filesystem::path& path, ModelParameters<T>& params, const spectral::StftConfig& cfg) {
  checkpoint::Container c;
  c.meta["kind"] = "model";
  export_to(c, params, cfg);
  checkpoint::save(path, c);
}

#define N2N_INSTANTIATE(T)                                                                                   \
  template class ModelParameters<T>;                                                                         \
  template ComplexTensor<T> forward<T>(const ComplexTensor<T>&, ModelParameters<T>&, bool);                  \
  template ComplexTensor<T> estimate_mask<T>(const ComplexTensor<T>&);                                       \
  template ComplexTensor<T> apply_mask<T>(const ComplexTensor<T>&, const ComplexTensor<T>&);                 \
  template ComplexTensor<T> to_tensor<T>(const std::vector<spectral::ComplexSpectrogram>&);                  \
  template audio::Waveform denoise<T>(const audio::Waveform&, ModelParameters<T>&, const spectral::StftConfig&); \
  template void export_to<T>(checkpoint::Container&, ModelParameters<T>&, const spectral::StftConfig&);      \
  template void import_from<T>(const checkpoint::Container&, ModelParameters<T>&);                           \
  template LoadedModel<T> load_model<T>(const std::filesystem::path&);                                       \
  template void save_model<T>(const std::filesystem::path&, ModelParameters<T>&, const spectral::StftConfig&);

N2N_INSTANTIATE(float)
N2N_INSTANTIATE(double)
#undef N2N_INSTANTIATE

}  // namespace n2n::dcunet
