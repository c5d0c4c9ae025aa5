// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <string>
#include <vector>

#include <unistd.h>

#include "n2n/audio.h"
#include "n2n/cx/complex.h"
#include "n2n/cx/ops.h"
#include "n2n/dcunet.h"
#include "n2n/rng.h"

namespace n2n::testing {

namespace fs = std::filesystem;

// Directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("n2n_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Every regular file under a, compared byte for byte with its twin under b.
inline bool trees_identical(const fs::path& a, const fs::path& b, std::string* first_diff = nullptr) {
  std::vector<fs::path> fa, fb;
  for (auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) {
    if (first_diff) *first_diff = "file lists differ";
    return false;
  }
  for (auto& rel : fa) {
    if (read_bytes(a / rel) != read_bytes(b / rel)) {
      if (first_diff) *first_diff = rel.string();
      return false;
    }
  }
  return true;
}

inline std::vector<double> gaussian(std::size_t n, Rng& rng, double sigma = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = sigma * rng.normal();
  return v;
}

template <typename T = double>
cx::Tensor<T> random_tensor(const cx::Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  cx::Tensor<T> t(shape);
  for (auto& x : t.data) x = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T = double>
cx::ComplexTensor<T> random_complex(const cx::Shape& logical, Rng& rng, bool requires_grad = false) {
  return cx::ComplexTensor<T>::from_parts(random_tensor<T>(logical, rng), random_tensor<T>(logical, rng),
                                          requires_grad);
}

// Element (b, c, h, w) of the real or imaginary plane as std::complex.
inline std::complex<double> at(const cx::Tensor<double>& re, const cx::Tensor<double>& im, std::int64_t b,
                               std::int64_t c, std::int64_t h, std::int64_t w) {
  const auto& s = re.shape;
  std::size_t i = static_cast<std::size_t>(((b * s[1] + c) * s[2] + h) * s[3] + w);
  return {re.data[i], im.data[i]};
}

// Reference complex convolution: a plain loop over output positions.
// w has shape [Co, Ci, kh, kw].
inline void conv2d_oracle(const cx::Tensor<double>& xr, const cx::Tensor<double>& xi,
                          const cx::Tensor<double>& wr, const cx::Tensor<double>& wi,
                          const std::vector<double>& br, const std::vector<double>& bi, cx::Pair stride,
                          cx::Pair pad, cx::Tensor<double>& out_r, cx::Tensor<double>& out_i) {
  const auto B = xr.shape[0], Ci = xr.shape[1], H = xr.shape[2], W = xr.shape[3];
  const auto Co = wr.shape[0], KH = wr.shape[2], KW = wr.shape[3];
  const auto OH = cx::conv_out_size(H, static_cast<int>(KH), stride[0], pad[0]);
  const auto OW = cx::conv_out_size(W, static_cast<int>(KW), stride[1], pad[1]);
  out_r = cx::Tensor<double>({B, Co, OH, OW});
  out_i = cx::Tensor<double>({B, Co, OH, OW});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t o = 0; o < Co; ++o)
      for (std::int64_t y = 0; y < OH; ++y)
        for (std::int64_t x = 0; x < OW; ++x) {
          std::complex<double> acc(br[o], bi[o]);
          for (std::int64_t c = 0; c < Ci; ++c)
            for (std::int64_t ky = 0; ky < KH; ++ky)
              for (std::int64_t kx = 0; kx < KW; ++kx) {
                std::int64_t iy = y * stride[0] + ky - pad[0];
                std::int64_t ix = x * stride[1] + kx - pad[1];
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += at(wr, wi, o, c, ky, kx) * at(xr, xi, b, c, iy, ix);
              }
          std::size_t i = static_cast<std::size_t>(((b * Co + o) * OH + y) * OW + x);
          out_r.data[i] = acc.real();
          out_i.data[i] = acc.imag();
        }
}

// Reference transposed convolution in scatter form. w has shape
// [Ci, Co, kh, kw].
inline void conv_transpose2d_oracle(const cx::Tensor<double>& xr, const cx::Tensor<double>& xi,
                                    const cx::Tensor<double>& wr, const cx::Tensor<double>& wi,
                                    const std::vector<double>& br, const std::vector<double>& bi,
                                    cx::Pair stride, cx::Pair pad, cx::Pair out_pad, cx::Tensor<double>& out_r,
                                    cx::Tensor<double>& out_i) {
  const auto B = xr.shape[0], Ci = xr.shape[1], H = xr.shape[2], W = xr.shape[3];
  const auto Co = wr.shape[1], KH = wr.shape[2], KW = wr.shape[3];
  const auto OH = cx::conv_transpose_out_size(H, static_cast<int>(KH), stride[0], pad[0], out_pad[0]);
  const auto OW = cx::conv_transpose_out_size(W, static_cast<int>(KW), stride[1], pad[1], out_pad[1]);
  std::vector<std::complex<double>> acc(static_cast<std::size_t>(B * Co * OH * OW));
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t o = 0; o < Co; ++o)
      for (std::int64_t k = 0; k < OH * OW; ++k) acc[static_cast<std::size_t>((b * Co + o) * OH * OW + k)] = {br[o], bi[o]};
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < Ci; ++c)
      for (std::int64_t y = 0; y < H; ++y)
        for (std::int64_t x = 0; x < W; ++x)
          for (std::int64_t o = 0; o < Co; ++o)
            for (std::int64_t ky = 0; ky < KH; ++ky)
              for (std::int64_t kx = 0; kx < KW; ++kx) {
                std::int64_t oy = y * stride[0] + ky - pad[0];
                std::int64_t ox = x * stride[1] + kx - pad[1];
                if (oy < 0 || oy >= OH || ox < 0 || ox >= OW) continue;
                acc[static_cast<std::size_t>(((b * Co + o) * OH + oy) * OW + ox)] +=
                    at(wr, wi, c, o, ky, kx) * at(xr, xi, b, c, y, x);
              }
  out_r = cx::Tensor<double>({B, Co, OH, OW});
  out_i = cx::Tensor<double>({B, Co, OH, OW});
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out_r.data[i] = acc[i].real();
    out_i.data[i] = acc[i].imag();
  }
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Four synthetic noise categories (two 0.7 s files each) laid out as
// <dir>/<category>/<n>.wav.
inline std::vector<std::string> write_noise_tree(const fs::path& dir, int rate, std::uint64_t seed) {
  const std::vector<std::string> cats{"hiss", "hum", "rumble", "siren"};
  const auto n = static_cast<std::size_t>(0.7 * rate);
  Rng rng(seed);
  for (const auto& c : cats) {
    fs::create_directories(dir / c);
    for (int f = 0; f < 2; ++f) {
      audio::Waveform w{std::vector<double>(n), rate};
      double state = 0.0, phase = 0.0;
      const double base = rng.uniform(50.0, 70.0), sweep = rng.uniform(600.0, 900.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate;
        double v = 0.0;
        if (c == "hiss") {
          v = 0.3 * rng.normal();
        } else if (c == "hum") {
          for (int h = 1; h <= 5; ++h) v += 0.2 / h * std::sin(2 * std::numbers::pi * base * h * t);
        } else if (c == "rumble") {
          state = 0.995 * state + 0.05 * rng.normal();
          v = state;
        } else {
          phase += 2 * std::numbers::pi * (sweep + 300.0 * std::sin(2 * std::numbers::pi * 2.0 * t)) / rate;
          v = 0.3 * std::sin(phase);
        }
        w.samples[i] = v;
      }
      audio::write_wav(w, dir / c / (std::to_string(f) + ".wav"));
    }
  }
  return cats;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline std::vector<double> minus(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Compares reverse-mode gradients of a scalar function against central
// differences, |g - fd| / (|fd| + 1e-8). At most max_per_leaf entries of
// each leaf are probed (chosen at random when the leaf is larger).
inline GradCheckResult check_gradients(const std::function<cx::Var<double>()>& f,
                                       std::vector<cx::Var<double>> leaves, double h = 1e-6,
                                       std::size_t max_per_leaf = 48, std::uint64_t seed = 99) {
  for (auto& l : leaves) l.zero_grad();
  cx::backward(f());
  std::vector<std::vector<double>> analytic;
  for (auto& l : leaves) {
    if (l.has_grad())
      analytic.emplace_back(l.grad().begin(), l.grad().end());
    else
      analytic.emplace_back(static_cast<std::size_t>(l.numel()), 0.0);
  }
  Rng rng(seed);
  GradCheckResult r;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& data = leaves[li].mutable_value().data;
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > max_per_leaf) {
      for (std::size_t i = 0; i < max_per_leaf; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
      idx.resize(max_per_leaf);
    }
    for (std::size_t i : idx) {
      const double orig = data[i];
      data[i] = orig + h;
      const double fp = f().value().data[0];
      data[i] = orig - h;
      const double fm = f().value().data[0];
      data[i] = orig;
      const double fd = (fp - fm) / (2 * h);
      r.max_rel_error = std::max(r.max_rel_error, std::abs(analytic[li][i] - fd) / (std::abs(fd) + 1e-8));
      ++r.checked;
    }
  }
  for (auto& l : leaves) l.zero_grad();
  return r;
}

// Scalar probe of a complex tensor: <storage, r> with a fixed random r, so
// every output element contributes with an O(1) weight.
inline cx::Var<double> probe(const cx::Var<double>& v, std::uint64_t seed = 7) {
  Rng rng(seed);
  return cx::ops::dot(v, cx::Var<double>::leaf(random_tensor<double>(v.shape(), rng)));
}

struct NetworkGradCheck {
  double max_rel_error = 0.0;
  // Conv biases that feed a batch norm have an exactly zero gradient in
  // training mode (normalization removes per-channel constants); finite
  // differences there measure only rounding noise, so these are checked for
  // |g| ~ 0 instead and covered by the inference-mode pass.
  double max_abs_pre_norm_bias_grad = 0.0;
};

inline NetworkGradCheck check_network_gradients(dcunet::ModelParameters<double>& p, const cx::ComplexTensor<double>& x,
                                                std::size_t max_per_leaf = 12) {
  const std::string last_dec = "dec" + std::to_string(p.decoder_convs().size() - 1) + ".";
  auto pre_norm_bias = [&](const std::string& name) {
    return name.find(".conv.b_") != std::string::npos && name.rfind(last_dec, 0) != 0;
  };
  NetworkGradCheck out;
  for (bool training : {false, true}) {
    std::vector<cx::Var<double>> leaves{x.storage}, biases;
    for (auto& np : p.parameters()) {
      if (training && pre_norm_bias(np.name))
        biases.push_back(*np.var);
      else
        leaves.push_back(*np.var);
    }
    auto f = [&] { return probe(dcunet::estimate_mask(dcunet::forward(x, p, training)).storage); };
    out.max_rel_error = std::max(out.max_rel_error, check_gradients(f, leaves, 1e-6, max_per_leaf).max_rel_error);
    if (training) {
      cx::backward(f());
      for (auto& b : biases) {
        if (b.has_grad())
          for (double g : b.grad()) out.max_abs_pre_norm_bias_grad = std::max(out.max_abs_pre_norm_bias_grad, std::abs(g));
        b.zero_grad();
      }
      for (auto& l : leaves) l.zero_grad();
    }
  }
  return out;
}

}  // namespace n2n::testing
