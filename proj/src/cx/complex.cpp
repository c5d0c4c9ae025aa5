// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#include "n2n/cx/complex.h"

#include <cmath>
#include <numbers>

#include "gemm.h"
#include "n2n/spectral.h"

namespace n2n::cx {

using detail::ConvGeometry;
using detail::gemm;

// ---------------------------------------------------------------------------
// ComplexTensor

template <typename T>
Tensor<T> ComplexTensor<T>::real() const {
  Tensor<T> out(shape());
  const auto block = channels() * plane_size();
  const auto& src = storage.value().data;
  for (std::int64_t b = 0; b < batch(); ++b) {
    std::copy_n(src.begin() + b * 2 * block, block, out.data.begin() + b * block);
  }
  return out;
}

template <typename T>
Tensor<T> ComplexTensor<T>::imag() const {
  Tensor<T> out(shape());
  const auto block = channels() * plane_size();
  const auto& src = storage.value().data;
  for (std::int64_t b = 0; b < batch(); ++b) {
    std::copy_n(src.begin() + b * 2 * block + block, block, out.data.begin() + b * block);
  }
  return out;
}

template <typename T>
ComplexTensor<T> ComplexTensor<T>::from_parts(const Tensor<T>& re, const Tensor<T>& im, bool requires_grad) {
  if (re.shape != im.shape || re.shape.size() != 4) {
    throw ConfigError("ComplexTensor: real/imag parts must share a 4-d shape");
  }
  const auto [b, c, h, w] = std::array{re.shape[0], re.shape[1], re.shape[2], re.shape[3]};
  Tensor<T> st({b, 2 * c, h, w});
  const auto block = c * h * w;
  for (std::int64_t i = 0; i < b; ++i) {
    std::copy_n(re.data.begin() + i * block, block, st.data.begin() + i * 2 * block);
    std::copy_n(im.data.begin() + i * block, block, st.data.begin() + i * 2 * block + block);
  }
  return {Var<T>::leaf(std::move(st), requires_grad)};
}

template <typename T>
ComplexTensor<T> ComplexTensor<T>::zeros(const Shape& logical, bool requires_grad) {
  if (logical.size() != 4) throw ConfigError("ComplexTensor: shape must be 4-d");
  return {Var<T>::leaf(Tensor<T>({logical[0], 2 * logical[1], logical[2], logical[3]}), requires_grad)};
}

namespace {

template <typename T>
void check_weights(const ComplexConvWeights<T>& w) {
  if (w.w_real.shape() != w.w_imag.shape() || w.w_real.shape().size() != 4) {
    throw ConfigError("complex conv: real/imag kernels must share a 4-d shape");
  }
  if (w.b_real.shape() != w.b_imag.shape() || w.b_real.shape().size() != 1) {
    throw ConfigError("complex conv: bias must be two 1-d tensors");
  }
  for (auto d : w.w_real.shape()) {
    if (d <= 0) throw ConfigError("complex conv: kernel dims must be positive");
  }
}

// Block kernel for a forward conv, [2*Co, 2*Ci*kk].
template <typename T>
std::vector<T> conv_block(const Tensor<T>& wr, const Tensor<T>& wi) {
  const auto co = wr.shape[0], ci = wr.shape[1], kk = wr.shape[2] * wr.shape[3];
  const auto row = 2 * ci * kk;
  std::vector<T> k(static_cast<std::size_t>(2 * co * row));
  for (std::int64_t o = 0; o < co; ++o) {
    for (std::int64_t c = 0; c < ci; ++c) {
      for (std::int64_t j = 0; j < kk; ++j) {
        const T r = wr.data[(o * ci + c) * kk + j];
        const T i = wi.data[(o * ci + c) * kk + j];
        k[o * row + c * kk + j] = r;
        k[o * row + (ci + c) * kk + j] = -i;
        k[(co + o) * row + c * kk + j] = i;
        k[(co + o) * row + (ci + c) * kk + j] = r;
      }
    }
  }
  return k;
}

// Block kernel for a transposed conv, [2*Ci, 2*Co*kk].
template <typename T>
std::vector<T> conv_transpose_block(const Tensor<T>& wr, const Tensor<T>& wi) {
  const auto ci = wr.shape[0], co = wr.shape[1], kk = wr.shape[2] * wr.shape[3];
  const auto row = 2 * co * kk;
  std::vector<T> k(static_cast<std::size_t>(2 * ci * row));
  for (std::int64_t i = 0; i < ci; ++i) {
    for (std::int64_t o = 0; o < co; ++o) {
      for (std::int64_t j = 0; j < kk; ++j) {
        const T r = wr.data[(i * co + o) * kk + j];
        const T m = wi.data[(i * co + o) * kk + j];
        k[i * row + o * kk + j] = r;
        k[i * row + (co + o) * kk + j] = m;
        k[(ci + i) * row + o * kk + j] = -m;
        k[(ci + i) * row + (co + o) * kk + j] = r;
      }
    }
  }
  return k;
}

template <typename T>
void add_bias(std::vector<T>& out, std::int64_t batch, std::int64_t co, std::int64_t plane, const Tensor<T>& br,
              const Tensor<T>& bi) {
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t o = 0; o < 2 * co; ++o) {
      const T v = o < co ? br.data[o] : bi.data[o - co];
      T* p = out.data() + (b * 2 * co + o) * plane;
      for (std::int64_t i = 0; i < plane; ++i) p[i] += v;
    }
  }
}

template <typename T>
void bias_grad(Node<T>& n, std::int64_t batch, std::int64_t co, std::int64_t plane) {
  Node<T>* gbr = input_needing_grad(n, 3);
  Node<T>* gbi = input_needing_grad(n, 4);
  if (!gbr && !gbi) return;
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t o = 0; o < 2 * co; ++o) {
      const T* g = n.grad.data() + (b * 2 * co + o) * plane;
      double s = 0.0;
      for (std::int64_t i = 0; i < plane; ++i) s += g[i];
      if (o < co && gbr) gbr->grad_buffer()[o] += static_cast<T>(s);
      if (o >= co && gbi) gbi->grad_buffer()[o - co] += static_cast<T>(s);
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Convolutions

template <typename T>
ComplexTensor<T> complex_conv2d(const ComplexTensor<T>& x, const ComplexConvWeights<T>& w, Pair stride,
                                Pair padding) {
  check_weights(w);
  const auto& ws = w.w_real.shape();
  const std::int64_t co = ws[0], ci = ws[1];
  const int kh = static_cast<int>(ws[2]), kw = static_cast<int>(ws[3]);
  if (x.storage.shape().size() != 4 || x.channels() != ci) {
    throw ConfigError("complex_conv2d: input has " + std::to_string(x.channels()) + " channels, kernel expects " +
                      std::to_string(ci));
  }
  if (w.b_real.numel() != co) throw ConfigError("complex_conv2d: bias size mismatch");
  if (stride[0] < 1 || stride[1] < 1) throw ConfigError("complex_conv2d: stride must be >= 1");
  const std::int64_t ho = conv_out_size(x.height(), kh, stride[0], padding[0]);
  const std::int64_t wo = conv_out_size(x.width(), kw, stride[1], padding[1]);
  if (ho < 1 || wo < 1) throw ConfigError("complex_conv2d: input smaller than kernel");

  const ConvGeometry geo{2 * ci, x.height(), x.width(), kh, kw, stride[0], stride[1], padding[0], padding[1], ho, wo};
  const std::int64_t batch = x.batch();
  const std::int64_t in_block = 2 * ci * x.plane_size();
  const std::int64_t out_block = 2 * co * ho * wo;

  const auto kernel = conv_block(w.w_real.value(), w.w_imag.value());
  Tensor<T> out({batch, 2 * co, ho, wo});
  std::vector<T> cols(static_cast<std::size_t>(geo.rows() * geo.cols()));
  for (std::int64_t b = 0; b < batch; ++b) {
    im2col(x.storage.value().data.data() + b * in_block, geo, cols.data());
    gemm(false, false, 2 * co, geo.cols(), geo.rows(), T(1), kernel.data(), geo.rows(), cols.data(), geo.cols(), T(0),
         out.data.data() + b * out_block, geo.cols());
  }
  add_bias(out.data, batch, co, ho * wo, w.b_real.value(), w.b_imag.value());

  auto backward = [geo, co, ci, batch, in_block, out_block](Node<T>& n) {
    const Tensor<T>& wr = n.inputs[1]->value;
    const Tensor<T>& wi = n.inputs[2]->value;
    const auto kernel = conv_block(wr, wi);
    const T* gout = n.grad.data();
    std::vector<T> cols(static_cast<std::size_t>(geo.rows() * geo.cols()));

    if (Node<T>* gx = input_needing_grad(n, 0)) {
      T* dst = gx->grad_buffer().data();
      for (std::int64_t b = 0; b < batch; ++b) {
        gemm(true, false, geo.rows(), geo.cols(), 2 * co, T(1), kernel.data(), geo.rows(), gout + b * out_block,
             geo.cols(), T(0), cols.data(), geo.cols());
        col2im(cols.data(), geo, dst + b * in_block);
      }
    }
    Node<T>* gwr = input_needing_grad(n, 1);
    Node<T>* gwi = input_needing_grad(n, 2);
    if (gwr || gwi) {
      std::vector<T> dk(static_cast<std::size_t>(2 * co * geo.rows()), T(0));
      const T* xin = n.inputs[0]->value.data.data();
      for (std::int64_t b = 0; b < batch; ++b) {
        im2col(xin + b * in_block, geo, cols.data());
        gemm(false, true, 2 * co, geo.rows(), geo.cols(), T(1), gout + b * out_block, geo.cols(), cols.data(),
             geo.cols(), T(1), dk.data(), geo.rows());
      }
      const std::int64_t kk = geo.kh * geo.kw, row = geo.rows();
      for (std::int64_t o = 0; o < co; ++o) {
        for (std::int64_t c = 0; c < ci; ++c) {
          for (std::int64_t j = 0; j < kk; ++j) {
            const std::int64_t idx = (o * ci + c) * kk + j;
            if (gwr) {
              gwr->grad_buffer()[idx] += dk[o * row + c * kk + j] + dk[(co + o) * row + (ci + c) * kk + j];
            }
            if (gwi) {
              gwi->grad_buffer()[idx] += dk[(co + o) * row + c * kk + j] - dk[o * row + (ci + c) * kk + j];
            }
          }
        }
      }
    }
    bias_grad(n, batch, co, geo.cols());
  };
  return {make_result<T>(std::move(out), {x.storage, w.w_real, w.w_imag, w.b_real, w.b_imag}, backward)};
}

template <typename T>
ComplexTensor<T> complex_conv_transpose2d(const ComplexTensor<T>& x, const ComplexConvWeights<T>& w, Pair stride,
                                          Pair padding, Pair output_padding) {
  check_weights(w);
  const auto& ws = w.w_real.shape();
  const std::int64_t ci = ws[0], co = ws[1];
  const int kh = static_cast<int>(ws[2]), kw = static_cast<int>(ws[3]);
  if (x.storage.shape().size() != 4 || x.channels() != ci) {
    throw ConfigError("complex_conv_transpose2d: input has " + std::to_string(x.channels()) +
                      " channels, kernel expects " + std::to_string(ci));
  }
  if (w.b_real.numel() != co) throw ConfigError("complex_conv_transpose2d: bias size mismatch");
  for (int a = 0; a < 2; ++a) {
    if (stride[a] < 1) throw ConfigError("complex_conv_transpose2d: stride must be >= 1");
    if (output_padding[a] < 0 || output_padding[a] >= stride[a]) {
      throw ConfigError("complex_conv_transpose2d: output padding must be in [0, stride)");
    }
  }
  const std::int64_t ho = conv_transpose_out_size(x.height(), kh, stride[0], padding[0], output_padding[0]);
  const std::int64_t wo = conv_transpose_out_size(x.width(), kw, stride[1], padding[1], output_padding[1]);
  if (ho < 1 || wo < 1) throw ConfigError("complex_conv_transpose2d: empty output");

  // The output image plays the role of a conv input whose column grid is x.
  const ConvGeometry geo{2 * co, ho, wo, kh, kw, stride[0], stride[1], padding[0], padding[1], x.height(), x.width()};
  const std::int64_t batch = x.batch();
  const std::int64_t in_block = 2 * ci * x.plane_size();
  const std::int64_t out_block = 2 * co * ho * wo;

  const auto kernel = conv_transpose_block(w.w_real.value(), w.w_imag.value());
  Tensor<T> out({batch, 2 * co, ho, wo});
  std::vector<T> cols(static_cast<std::size_t>(geo.rows() * geo.cols()));
  for (std::int64_t b = 0; b < batch; ++b) {
    gemm(true, false, geo.rows(), geo.cols(), 2 * ci, T(1), kernel.data(), geo.rows(),
         x.storage.value().data.data() + b * in_block, geo.cols(), T(0), cols.data(), geo.cols());
    col2im(cols.data(), geo, out.data.data() + b * out_block);
  }
  add_bias(out.data, batch, co, ho * wo, w.b_real.value(), w.b_imag.value());

  auto backward = [geo, co, ci, batch, in_block, out_block](Node<T>& n) {
    const auto kernel = conv_transpose_block(n.inputs[1]->value, n.inputs[2]->value);
    const T* gout = n.grad.data();
    Node<T>* gx = input_needing_grad(n, 0);
    Node<T>* gwr = input_needing_grad(n, 1);
    Node<T>* gwi = input_needing_grad(n, 2);
    if (gx || gwr || gwi) {
      std::vector<T> cols(static_cast<std::size_t>(geo.rows() * geo.cols()));
      std::vector<T> dk;
      if (gwr || gwi) dk.assign(static_cast<std::size_t>(2 * ci * geo.rows()), T(0));
      const T* xin = n.inputs[0]->value.data.data();
      for (std::int64_t b = 0; b < batch; ++b) {
        im2col(gout + b * out_block, geo, cols.data());
        if (gx) {
          gemm(false, false, 2 * ci, geo.cols(), geo.rows(), T(1), kernel.data(), geo.rows(), cols.data(),
               geo.cols(), T(1), gx->grad_buffer().data() + b * in_block, geo.cols());
        }
        if (!dk.empty()) {
          gemm(false, true, 2 * ci, geo.rows(), geo.cols(), T(1), xin + b * in_block, geo.cols(), cols.data(),
               geo.cols(), T(1), dk.data(), geo.rows());
        }
      }
      if (!dk.empty()) {
        const std::int64_t kk = geo.kh * geo.kw, row = geo.rows();
        for (std::int64_t i = 0; i < ci; ++i) {
          for (std::int64_t o = 0; o < co; ++o) {
            for (std::int64_t j = 0; j < kk; ++j) {
              const std::int64_t idx = (i * co + o) * kk + j;
              if (gwr) gwr->grad_buffer()[idx] += dk[i * row + o * kk + j] + dk[(ci + i) * row + (co + o) * kk + j];
              if (gwi) gwi->grad_buffer()[idx] += dk[i * row + (co + o) * kk + j] - dk[(ci + i) * row + o * kk + j];
            }
          }
        }
      }
    }
    bias_grad(n, batch, co, geo.height * geo.width);
  };
  return {make_result<T>(std::move(out), {x.storage, w.w_real, w.w_imag, w.b_real, w.b_imag}, backward)};
}

// ---------------------------------------------------------------------------
// Pointwise ops

template <typename T>
ComplexTensor<T> lecrelu(const ComplexTensor<T>& x, T slope) {
  if (!(slope >= T(0) && slope <= T(1))) throw ConfigError("lecrelu: slope must be in [0, 1]");
  Tensor<T> out = x.storage.value();
  for (auto& v : out.data) v = v > T(0) ? v : slope * v;
  return {make_result<T>(std::move(out), {x.storage}, [slope](Node<T>& n) {
    const auto& in = n.inputs[0]->value.data;
    auto g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += in[i] > T(0) ? n.grad[i] : slope * n.grad[i];
  })};
}

template <typename T>
ComplexTensor<T> concat_channels(const ComplexTensor<T>& a, const ComplexTensor<T>& b) {
  if (a.batch() != b.batch() || a.height() != b.height() || a.width() != b.width()) {
    throw ConfigError("concat_channels: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const std::int64_t ca = a.channels(), cb = b.channels(), p = a.plane_size(), batch = a.batch();
  Tensor<T> out({batch, 2 * (ca + cb), a.height(), a.width()});
  // Per batch item: [a_re | b_re | a_im | b_im]
  auto copy = [&](std::int64_t bi, const std::vector<T>& src, std::int64_t c_src, std::int64_t part,
                  std::int64_t dst_off) {
    std::copy_n(src.begin() + (bi * 2 * c_src + part * c_src) * p, c_src * p,
                out.data.begin() + bi * 2 * (ca + cb) * p + dst_off * p);
  };
  for (std::int64_t bi = 0; bi < batch; ++bi) {
    copy(bi, a.storage.value().data, ca, 0, 0);
    copy(bi, b.storage.value().data, cb, 0, ca);
    copy(bi, a.storage.value().data, ca, 1, ca + cb);
    copy(bi, b.storage.value().data, cb, 1, 2 * ca + cb);
  }
  return {make_result<T>(std::move(out), {a.storage, b.storage}, [ca, cb, p, batch](Node<T>& n) {
    const std::int64_t total = 2 * (ca + cb) * p;
    auto scatter = [&](Node<T>* in, std::int64_t c_src, std::int64_t re_off, std::int64_t im_off) {
      auto g = in->grad_buffer();
      for (std::int64_t bi = 0; bi < batch; ++bi) {
        const T* src = n.grad.data() + bi * total;
        T* dst = g.data() + bi * 2 * c_src * p;
        for (std::int64_t i = 0; i < c_src * p; ++i) {
          dst[i] += src[re_off * p + i];
          dst[c_src * p + i] += src[im_off * p + i];
        }
      }
    };
    if (Node<T>* ga = input_needing_grad(n, 0)) scatter(ga, ca, 0, ca + cb);
    if (Node<T>* gb = input_needing_grad(n, 1)) scatter(gb, cb, ca, 2 * ca + cb);
  })};
}

template <typename T>
ComplexTensor<T> complex_mul(const ComplexTensor<T>& a, const ComplexTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ConfigError("complex_mul: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const std::int64_t block = a.channels() * a.plane_size(), batch = a.batch();
  Tensor<T> out(a.storage.shape());
  const auto& av = a.storage.value().data;
  const auto& bv = b.storage.value().data;
  for (std::int64_t bi = 0; bi < batch; ++bi) {
    const std::int64_t re = bi * 2 * block, im = re + block;
    for (std::int64_t i = 0; i < block; ++i) {
      const T ar = av[re + i], ai = av[im + i], br = bv[re + i], bim = bv[im + i];
      out.data[re + i] = ar * br - ai * bim;
      out.data[im + i] = ar * bim + ai * br;
    }
  }
  return {make_result<T>(std::move(out), {a.storage, b.storage}, [block, batch](Node<T>& n) {
    const auto& av = n.inputs[0]->value.data;
    const auto& bv = n.inputs[1]->value.data;
    Node<T>* ga = input_needing_grad(n, 0);
    Node<T>* gb = input_needing_grad(n, 1);
    for (std::int64_t bi = 0; bi < batch; ++bi) {
      const std::int64_t re = bi * 2 * block, im = re + block;
      for (std::int64_t i = 0; i < block; ++i) {
        const T gr = n.grad[re + i], gi = n.grad[im + i];
        if (ga) {
          auto g = ga->grad_buffer();
          g[re + i] += gr * bv[re + i] + gi * bv[im + i];
          g[im + i] += -gr * bv[im + i] + gi * bv[re + i];
        }
        if (gb) {
          auto g = gb->grad_buffer();
          g[re + i] += gr * av[re + i] + gi * av[im + i];
          g[im + i] += -gr * av[im + i] + gi * av[re + i];
        }
      }
    }
  })};
}

template <typename T>
ComplexTensor<T> polar_mask(const ComplexTensor<T>& o) {
  constexpr double kGuard = 1e-12;
  const std::int64_t block = o.channels() * o.plane_size(), batch = o.batch();
  Tensor<T> out(o.storage.shape());
  const auto& ov = o.storage.value().data;
  for (std::int64_t bi = 0; bi < batch; ++bi) {
    const std::int64_t re = bi * 2 * block, im = re + block;
    for (std::int64_t i = 0; i < block; ++i) {
      const double a = ov[re + i], b = ov[im + i];
      const double r = std::hypot(a, b);
      if (r < kGuard) continue;
      const double g = std::tanh(r) / r;
      out.data[re + i] = static_cast<T>(g * a);
      out.data[im + i] = static_cast<T>(g * b);
    }
  }
  return {make_result<T>(std::move(out), {o.storage}, [block, batch](Node<T>& n) {
    // M = g(r) * (a, b) with g(r) = tanh(r) / r; h(r) = g'(r) / r.
    const auto& ov = n.inputs[0]->value.data;
    auto grad = n.inputs[0]->grad_buffer();
    for (std::int64_t bi = 0; bi < batch; ++bi) {
      const std::int64_t re = bi * 2 * block, im = re + block;
      for (std::int64_t i = 0; i < block; ++i) {
        const double a = ov[re + i], b = ov[im + i];
        const double r = std::hypot(a, b);
        double g, h;
        if (r < 1e-3) {
          const double r2 = r * r;
          g = 1.0 - r2 / 3.0 + 2.0 * r2 * r2 / 15.0;
          h = -2.0 / 3.0 + 8.0 * r2 / 15.0;
        } else {
          const double t = std::tanh(r);
          g = t / r;
          h = (r * (1.0 - t * t) - t) / (r * r * r);
        }
        const double gr = n.grad[re + i], gi = n.grad[im + i];
        grad[re + i] += static_cast<T>(gr * (g + h * a * a) + gi * (h * a * b));
        grad[im + i] += static_cast<T>(gr * (h * a * b) + gi * (g + h * b * b));
      }
    }
  })};
}

// ---------------------------------------------------------------------------
// Complex batch normalization

namespace {

struct Sym2 {
  double rr, ri, ii;
};

// Closed-form inverse square root of a 2x2 SPD matrix:
// s = sqrt(det), t = sqrt(trace + 2s), V^{-1/2} = [[ii + s, -ri], [-ri, rr + s]] / (s t).
Sym2 inverse_sqrt(const Sym2& v) {
  const double s = std::sqrt(v.rr * v.ii - v.ri * v.ri);
  const double t = std::sqrt(v.rr + v.ii + 2.0 * s);
  const double k = 1.0 / (s * t);
  return {(v.ii + s) * k, -v.ri * k, (v.rr + s) * k};
}

// Adjoint of V -> V^{-1/2}: given dL/dW (general 2x2, row-major), returns
// dL/dV via the Daleckii-Krein divided-difference formula.
std::array<double, 4> inverse_sqrt_adjoint(const Sym2& v, const std::array<double, 4>& gw) {
  const double theta = 0.5 * std::atan2(2.0 * v.ri, v.rr - v.ii);
  const double c = std::cos(theta), s = std::sin(theta);
  const double l1 = v.rr * c * c + 2.0 * v.ri * s * c + v.ii * s * s;
  const double l2 = v.rr * s * s - 2.0 * v.ri * s * c + v.ii * c * c;
  const double q1 = std::sqrt(l1), q2 = std::sqrt(l2);
  const double f11 = -0.5 / (l1 * q1);
  const double f22 = -0.5 / (l2 * q2);
  const double f12 = -1.0 / (q1 * q2 * (q1 + q2));
  // Q = [[c, -s], [s, c]]; M = Q^T G Q
  const double q[2][2] = {{c, -s}, {s, c}};
  double m[2][2] = {};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) m[i][j] += q[k][i] * gw[k * 2 + l] * q[l][j];
  m[0][0] *= f11;
  m[1][1] *= f22;
  m[0][1] *= f12;
  m[1][0] *= f12;
  std::array<double, 4> out{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) out[i * 2 + j] += q[i][k] * m[k][l] * q[j][l];
  return out;
}

struct ChannelStats {
  double mean_r, mean_i;
  Sym2 cov;    // with eps on the diagonal
  Sym2 white;  // cov^{-1/2}
};

}  // namespace

template <typename T>
ComplexBatchNorm<T> ComplexBatchNorm<T>::create(std::int64_t channels) {
  ComplexBatchNorm bn;
  const T g = static_cast<T>(1.0 / std::numbers::sqrt2);
  bn.gamma_rr = Var<T>::leaf(Tensor<T>({channels}, g), true);
  bn.gamma_ri = Var<T>::leaf(Tensor<T>({channels}, T(0)), true);
  bn.gamma_ii = Var<T>::leaf(Tensor<T>({channels}, g), true);
  bn.beta_r = Var<T>::leaf(Tensor<T>({channels}, T(0)), true);
  bn.beta_i = Var<T>::leaf(Tensor<T>({channels}, T(0)), true);
  bn.running_mean_r = Tensor<T>({channels}, T(0));
  bn.running_mean_i = Tensor<T>({channels}, T(0));
  bn.running_vrr = Tensor<T>({channels}, T(1));
  bn.running_vri = Tensor<T>({channels}, T(0));
  bn.running_vii = Tensor<T>({channels}, T(1));
  return bn;
}

template <typename T>
ComplexTensor<T> complex_batch_norm(const ComplexTensor<T>& x, ComplexBatchNorm<T>& bn, bool training) {
  const std::int64_t C = x.channels(), P = x.plane_size(), B = x.batch();
  if (bn.gamma_rr.numel() != C) {
    throw ConfigError("complex_batch_norm: " + std::to_string(C) + " channels, parameters for " +
                      std::to_string(bn.gamma_rr.numel()));
  }
  const std::int64_t count = B * P;
  if (training && count < 2) throw ConfigError("complex_batch_norm: need >= 2 elements per channel in training");
  const auto& xv = x.storage.value().data;
  auto re_at = [C, P](std::int64_t b, std::int64_t c) { return (b * 2 * C + c) * P; };
  auto im_at = [C, P](std::int64_t b, std::int64_t c) { return (b * 2 * C + C + c) * P; };

  std::vector<ChannelStats> stats(static_cast<std::size_t>(C));
  for (std::int64_t c = 0; c < C; ++c) {
    ChannelStats& st = stats[static_cast<std::size_t>(c)];
    if (training) {
      double sr = 0.0, si = 0.0;
      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t i = 0; i < P; ++i) {
          sr += xv[re_at(b, c) + i];
          si += xv[im_at(b, c) + i];
        }
      }
      st.mean_r = sr / count;
      st.mean_i = si / count;
      double rr = 0.0, ri = 0.0, ii = 0.0;
      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t i = 0; i < P; ++i) {
          const double dr = xv[re_at(b, c) + i] - st.mean_r;
          const double di = xv[im_at(b, c) + i] - st.mean_i;
          rr += dr * dr;
          ri += dr * di;
          ii += di * di;
        }
      }
      st.cov = {rr / count, ri / count, ii / count};
      const double m = bn.momentum;
      bn.running_mean_r.data[c] = static_cast<T>(m * bn.running_mean_r.data[c] + (1 - m) * st.mean_r);
      bn.running_mean_i.data[c] = static_cast<T>(m * bn.running_mean_i.data[c] + (1 - m) * st.mean_i);
      bn.running_vrr.data[c] = static_cast<T>(m * bn.running_vrr.data[c] + (1 - m) * st.cov.rr);
      bn.running_vri.data[c] = static_cast<T>(m * bn.running_vri.data[c] + (1 - m) * st.cov.ri);
      bn.running_vii.data[c] = static_cast<T>(m * bn.running_vii.data[c] + (1 - m) * st.cov.ii);
    } else {
      st.mean_r = bn.running_mean_r.data[c];
      st.mean_i = bn.running_mean_i.data[c];
      st.cov = {bn.running_vrr.data[c], bn.running_vri.data[c], bn.running_vii.data[c]};
    }
    st.cov.rr += bn.eps;
    st.cov.ii += bn.eps;
    st.white = inverse_sqrt(st.cov);
  }

  Tensor<T> out(x.storage.shape());
  for (std::int64_t c = 0; c < C; ++c) {
    const ChannelStats& st = stats[static_cast<std::size_t>(c)];
    const double grr = bn.gamma_rr.value().data[c], gri = bn.gamma_ri.value().data[c];
    const double gii = bn.gamma_ii.value().data[c];
    const double br = bn.beta_r.value().data[c], bi = bn.beta_i.value().data[c];
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t i = 0; i < P; ++i) {
        const double dr = xv[re_at(b, c) + i] - st.mean_r;
        const double di = xv[im_at(b, c) + i] - st.mean_i;
        const double ur = st.white.rr * dr + st.white.ri * di;
        const double ui = st.white.ri * dr + st.white.ii * di;
        out.data[re_at(b, c) + i] = static_cast<T>(grr * ur + gri * ui + br);
        out.data[im_at(b, c) + i] = static_cast<T>(gri * ur + gii * ui + bi);
      }
    }
  }

  auto backward = [stats = std::move(stats), C, P, B, count, training, re_at, im_at](Node<T>& n) {
    const auto& xv = n.inputs[0]->value.data;
    Node<T>* gx = input_needing_grad(n, 0);
    Node<T>* ggrr = input_needing_grad(n, 1);
    Node<T>* ggri = input_needing_grad(n, 2);
    Node<T>* ggii = input_needing_grad(n, 3);
    Node<T>* gbr = input_needing_grad(n, 4);
    Node<T>* gbi = input_needing_grad(n, 5);
    for (std::int64_t c = 0; c < C; ++c) {
      const ChannelStats& st = stats[static_cast<std::size_t>(c)];
      const Sym2& w = st.white;
      const double grr = n.inputs[1]->value.data[c], gri = n.inputs[2]->value.data[c];
      const double gii = n.inputs[3]->value.data[c];
      double d_grr = 0, d_gri = 0, d_gii = 0, d_br = 0, d_bi = 0;
      std::array<double, 4> gw{};  // sum gu d^T
      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t i = 0; i < P; ++i) {
          const double dr = xv[re_at(b, c) + i] - st.mean_r;
          const double di = xv[im_at(b, c) + i] - st.mean_i;
          const double ur = w.rr * dr + w.ri * di;
          const double ui = w.ri * dr + w.ii * di;
          const double g_r = n.grad[re_at(b, c) + i], g_i = n.grad[im_at(b, c) + i];
          d_grr += g_r * ur;
          d_gii += g_i * ui;
          d_gri += g_r * ui + g_i * ur;
          d_br += g_r;
          d_bi += g_i;
          const double gur = grr * g_r + gri * g_i;
          const double gui = gri * g_r + gii * g_i;
          gw[0] += gur * dr;
          gw[1] += gur * di;
          gw[2] += gui * dr;
          gw[3] += gui * di;
        }
      }
      if (ggrr) ggrr->grad_buffer()[c] += static_cast<T>(d_grr);
      if (ggri) ggri->grad_buffer()[c] += static_cast<T>(d_gri);
      if (ggii) ggii->grad_buffer()[c] += static_cast<T>(d_gii);
      if (gbr) gbr->grad_buffer()[c] += static_cast<T>(d_br);
      if (gbi) gbi->grad_buffer()[c] += static_cast<T>(d_bi);
      if (!gx) continue;

      auto g = gx->grad_buffer();
      if (!training) {
        for (std::int64_t b = 0; b < B; ++b) {
          for (std::int64_t i = 0; i < P; ++i) {
            const double g_r = n.grad[re_at(b, c) + i], g_i = n.grad[im_at(b, c) + i];
            const double gur = grr * g_r + gri * g_i;
            const double gui = gri * g_r + gii * g_i;
            g[re_at(b, c) + i] += static_cast<T>(w.rr * gur + w.ri * gui);
            g[im_at(b, c) + i] += static_cast<T>(w.ri * gur + w.ii * gui);
          }
        }
        continue;
      }
      const auto gv = inverse_sqrt_adjoint(st.cov, gw);
      // (G_V + G_V^T) / N
      const double srr = 2.0 * gv[0] / count, sri = (gv[1] + gv[2]) / count, sii = 2.0 * gv[3] / count;
      double mean_r = 0.0, mean_i = 0.0;
      std::vector<double> gd(static_cast<std::size_t>(2 * count));
      std::size_t k = 0;
      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t i = 0; i < P; ++i, ++k) {
          const double dr = xv[re_at(b, c) + i] - st.mean_r;
          const double di = xv[im_at(b, c) + i] - st.mean_i;
          const double g_r = n.grad[re_at(b, c) + i], g_i = n.grad[im_at(b, c) + i];
          const double gur = grr * g_r + gri * g_i;
          const double gui = gri * g_r + gii * g_i;
          const double vr = w.rr * gur + w.ri * gui + srr * dr + sri * di;
          const double vi = w.ri * gur + w.ii * gui + sri * dr + sii * di;
          gd[2 * k] = vr;
          gd[2 * k + 1] = vi;
          mean_r += vr;
          mean_i += vi;
        }
      }
      mean_r /= count;
      mean_i /= count;
      k = 0;
      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t i = 0; i < P; ++i, ++k) {
          g[re_at(b, c) + i] += static_cast<T>(gd[2 * k] - mean_r);
          g[im_at(b, c) + i] += static_cast<T>(gd[2 * k + 1] - mean_i);
        }
      }
    }
  };
  return {make_result<T>(std::move(out), {x.storage, bn.gamma_rr, bn.gamma_ri, bn.gamma_ii, bn.beta_r, bn.beta_i},
                         std::move(backward))};
}

template <typename T>
ComplexTensor<T> complex_whiten(const ComplexTensor<T>& x, double eps) {
  auto bn = ComplexBatchNorm<T>::create(x.channels());
  bn.eps = eps;
  for (auto* v : {&bn.gamma_rr, &bn.gamma_ri, &bn.gamma_ii, &bn.beta_r, &bn.beta_i}) *v = Var<T>::leaf(v->value());
  std::fill(bn.gamma_rr.mutable_value().data.begin(), bn.gamma_rr.mutable_value().data.end(), T(1));
  std::fill(bn.gamma_ii.mutable_value().data.begin(), bn.gamma_ii.mutable_value().data.end(), T(1));
  return complex_batch_norm(x, bn, true);
}

// ---------------------------------------------------------------------------
// Differentiable inverse STFT

template <typename T>
Var<T> istft(const ComplexTensor<T>& spec, std::shared_ptr<spectral::StftEngine> engine) {
  if (spec.channels() != 1 || spec.height() != engine->bins() || spec.width() != engine->frames()) {
    throw ConfigError("istft: spectrogram " + to_string(spec.shape()) + " does not match engine geometry [B, 1, " +
                      std::to_string(engine->bins()) + ", " + std::to_string(engine->frames()) + "]");
  }
  const std::int64_t B = spec.batch();
  const auto plane = static_cast<std::int64_t>(engine->plane_size());
  const auto len = static_cast<std::int64_t>(engine->length());
  Tensor<T> out({B, len});
  std::vector<double> re(static_cast<std::size_t>(plane)), im(re.size()), wav(static_cast<std::size_t>(len));
  const auto& sv = spec.storage.value().data;
  for (std::int64_t b = 0; b < B; ++b) {
    std::copy_n(sv.begin() + b * 2 * plane, plane, re.begin());
    std::copy_n(sv.begin() + b * 2 * plane + plane, plane, im.begin());
    engine->inverse(re, im, wav);
    std::transform(wav.begin(), wav.end(), out.data.begin() + b * len, [](double v) { return static_cast<T>(v); });
  }
  return make_result<T>(std::move(out), {spec.storage}, [engine, B, plane, len](Node<T>& n) {
    std::vector<double> g(static_cast<std::size_t>(len)), gre(static_cast<std::size_t>(plane)), gim(gre.size());
    auto dst = n.inputs[0]->grad_buffer();
    for (std::int64_t b = 0; b < B; ++b) {
      std::copy_n(n.grad.begin() + b * len, len, g.begin());
      engine->inverse_adjoint(g, gre, gim);
      for (std::int64_t i = 0; i < plane; ++i) {
        dst[b * 2 * plane + i] += static_cast<T>(gre[i]);
        dst[b * 2 * plane + plane + i] += static_cast<T>(gim[i]);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Initialization

template <typename T>
std::pair<Tensor<T>, Tensor<T>> init_complex_weights(const Shape& shape, Rng& rng) {
  if (shape.size() < 2) throw ConfigError("init_complex_weights: need at least 2 dims");
  std::int64_t fan_in = shape[1];
  for (std::size_t i = 2; i < shape.size(); ++i) fan_in *= shape[i];
  if (fan_in <= 0) throw ConfigError("init_complex_weights: fan_in must be positive");
  const double sigma = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor<T> re(shape), im(shape);
  for (std::size_t i = 0; i < re.data.size(); ++i) {
    const double mag = sigma * std::sqrt(-2.0 * std::log(1.0 - rng.uniform()));
    const double phase = rng.uniform(-std::numbers::pi, std::numbers::pi);
    re.data[i] = static_cast<T>(mag * std::cos(phase));
    im.data[i] = static_cast<T>(mag * std::sin(phase));
  }
  return {std::move(re), std::move(im)};
}

template <typename T>
ComplexConvLayer<T> ComplexConvLayer<T>::create(std::int64_t in_channels, std::int64_t out_channels, Pair kernel,
                                                Pair stride, Pair padding, bool transposed, Rng& rng) {
  if (in_channels < 1 || out_channels < 1 || kernel[0] < 1 || kernel[1] < 1) {
    throw ConfigError("ComplexConvLayer: channels and kernel dims must be positive");
  }
  const Shape shape = transposed ? Shape{in_channels, out_channels, kernel[0], kernel[1]}
                                 : Shape{out_channels, in_channels, kernel[0], kernel[1]};
  auto [re, im] = init_complex_weights<T>(shape, rng);
  ComplexConvLayer layer;
  layer.weights.w_real = Var<T>::leaf(std::move(re), true);
  layer.weights.w_imag = Var<T>::leaf(std::move(im), true);
  layer.weights.b_real = Var<T>::leaf(Tensor<T>({out_channels}), true);
  layer.weights.b_imag = Var<T>::leaf(Tensor<T>({out_channels}), true);
  layer.stride = stride;
  layer.padding = padding;
  layer.transposed = transposed;
  return layer;
}

#define N2N_INSTANTIATE(T)                                                                                      \
  template struct ComplexConvLayer<T>;                                                                          \
  template struct ComplexTensor<T>;                                                                             \
  template struct ComplexBatchNorm<T>;                                                                          \
  template ComplexTensor<T> complex_conv2d<T>(const ComplexTensor<T>&, const ComplexConvWeights<T>&, Pair, Pair); \
  template ComplexTensor<T> complex_conv_transpose2d<T>(const ComplexTensor<T>&, const ComplexConvWeights<T>&,   \
                                                        Pair, Pair, Pair);                                      \
  template ComplexTensor<T> lecrelu<T>(const ComplexTensor<T>&, T);                                             \
  template ComplexTensor<T> concat_channels<T>(const ComplexTensor<T>&, const ComplexTensor<T>&);               \
  template ComplexTensor<T> complex_mul<T>(const ComplexTensor<T>&, const ComplexTensor<T>&);                   \
  template ComplexTensor<T> polar_mask<T>(const ComplexTensor<T>&);                                             \
  template ComplexTensor<T> complex_batch_norm<T>(const ComplexTensor<T>&, ComplexBatchNorm<T>&, bool);         \
  template ComplexTensor<T> complex_whiten<T>(const ComplexTensor<T>&, double);                                 \
  template Var<T> istft<T>(const ComplexTensor<T>&, std::shared_ptr<spectral::StftEngine>);                     \
  template std::pair<Tensor<T>, Tensor<T>> init_complex_weights<T>(const Shape&, Rng&);

N2N_INSTANTIATE(float)
N2N_INSTANTIATE(double)
#undef N2N_INSTANTIATE

}  // namespace n2n::cx
