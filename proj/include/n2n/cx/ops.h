// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#pragma once

#include "n2n/cx/autograd.h"

// Real-valued tracked primitives. Binary ops require identical shapes.
namespace n2n::cx::ops {

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T c);
template <typename T> Var<T> tanh(const Var<T>& a);
// Scalar results (shape [1]).
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> dot(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> norm(const Var<T>& a);

}  // namespace n2n::cx::ops
