// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#include "n2n/cx/ops.h"

#include <cmath>

namespace n2n::cx::ops {
namespace {

template <typename T>
void check_same(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                      to_string(b.shape()));
  }
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same(a, b, "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.value().data[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* in = input_needing_grad(n, k)) in->accumulate(n.grad);
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same(a, b, "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.value().data[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    if (auto* in = input_needing_grad(n, 0)) in->accumulate(n.grad);
    if (auto* in = input_needing_grad(n, 1)) {
      auto g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same(a, b, "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.value().data[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    const auto& av = n.inputs[0]->value.data;
    const auto& bv = n.inputs[1]->value.data;
    if (auto* in = input_needing_grad(n, 0)) {
      auto g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (auto* in = input_needing_grad(n, 1)) {
      auto g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  Tensor<T> out = a.value();
  for (auto& v : out.data) v *= c;
  return make_result<T>(std::move(out), {a}, [c](Node<T>& n) {
    auto g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * n.grad[i];
  });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data) v = std::tanh(v);
  return make_result<T>(std::move(out), {a}, [](Node<T>& n) {
    auto g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T y = n.value.data[i];
      g[i] += n.grad[i] * (T(1) - y * y);
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  double s = 0.0;
  for (T v : a.value().data) s += v;
  return make_result<T>(Tensor<T>({1}, static_cast<T>(s)), {a}, [](Node<T>& n) {
    auto g = n.inputs[0]->grad_buffer();
    for (auto& v : g) v += n.grad[0];
  });
}

template <typename T>
Var<T> dot(const Var<T>& a, const Var<T>& b) {
  check_same(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().data.size(); ++i) s += double(a.value().data[i]) * b.value().data[i];
  return make_result<T>(Tensor<T>({1}, static_cast<T>(s)), {a, b}, [](Node<T>& n) {
    const T go = n.grad[0];
    const auto& av = n.inputs[0]->value.data;
    const auto& bv = n.inputs[1]->value.data;
    if (auto* in = input_needing_grad(n, 0)) {
      auto g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * bv[i];
    }
    if (auto* in = input_needing_grad(n, 1)) {
      auto g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * av[i];
    }
  });
}

// d|a|/da = a/|a|; the subgradient 0 is used at a = 0.
template <typename T>
Var<T> norm(const Var<T>& a) {
  double s = 0.0;
  for (T v : a.value().data) s += double(v) * v;
  return make_result<T>(Tensor<T>({1}, static_cast<T>(std::sqrt(s))), {a}, [](Node<T>& n) {
    const T r = n.value.data[0];
    if (r == T(0)) return;
    const T go = n.grad[0] / r;
    const auto& av = n.inputs[0]->value.data;
    auto g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * av[i];
  });
}

#define N2N_INSTANTIATE(T)                                  \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);     \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);     \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);     \
  template Var<T> scale<T>(const Var<T>&, T);               \
  template Var<T> tanh<T>(const Var<T>&);                   \
  template Var<T> sum<T>(const Var<T>&);                    \
  template Var<T> dot<T>(const Var<T>&, const Var<T>&);     \
  template Var<T> norm<T>(const Var<T>&);

N2N_INSTANTIATE(float)
N2N_INSTANTIATE(double)
#undef N2N_INSTANTIATE

}  // namespace n2n::cx::ops
