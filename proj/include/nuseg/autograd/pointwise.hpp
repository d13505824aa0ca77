#pragma once

#include <cmath>

#include "nuseg/autograd/variable.hpp"

namespace nuseg {

template <typename T>
Variable<T> add(const Variable<T>& a, const Variable<T>& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor<T> out(a.value().shape());
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  T* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  auto an = a.node();
  auto bn = b.node();
  return Variable<T>::op(std::move(out), {a, b}, [an, bn](VarNode<T>& self) {
    if (an->requires_grad) an->accumulate_grad(self.grad);
    if (bn->requires_grad) bn->accumulate_grad(self.grad);
  });
}

template <typename T>
Variable<T> leaky_relu(const Variable<T>& x, T negative_slope) {
  Tensor<T> out(x.value().shape());
  const T* px = x.value().data();
  T* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] > T(0) ? px[i] : negative_slope * px[i];
  auto xn = x.node();
  Tensor<T> in = x.value();
  return Variable<T>::op(std::move(out), {x}, [xn, in, negative_slope](VarNode<T>& self) {
    if (!xn->requires_grad) return;
    Tensor<T>& gx = xn->grad_buffer();
    const T* pi = in.data();
    const T* pg = self.grad.data();
    T* pgx = gx.data();
    const int64_t m = in.numel();
    for (int64_t i = 0; i < m; ++i) pgx[i] += pi[i] > T(0) ? pg[i] : negative_slope * pg[i];
  });
}

template <typename T>
Variable<T> sigmoid(const Variable<T>& x) {
  Tensor<T> out(x.value().shape());
  const T* px = x.value().data();
  T* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    // Branch keeps exp() argument non-positive for stability at large |x|.
    const T v = px[i];
    if (v >= T(0)) {
      po[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      po[i] = e / (T(1) + e);
    }
  }
  auto xn = x.node();
  Tensor<T> y = out;
  return Variable<T>::op(std::move(out), {x}, [xn, y](VarNode<T>& self) {
    if (!xn->requires_grad) return;
    Tensor<T>& gx = xn->grad_buffer();
    const T* py = y.data();
    const T* pg = self.grad.data();
    T* pgx = gx.data();
    const int64_t m = y.numel();
    for (int64_t i = 0; i < m; ++i) pgx[i] += pg[i] * py[i] * (T(1) - py[i]);
  });
}

// --- scalar (1-element) helpers used to compose loss expressions ---

template <typename T>
Variable<T> scalar_log(const Variable<T>& x) {
  const T v = x.item();
  Tensor<T> out = Tensor<T>::full({1}, std::log(v));
  auto xn = x.node();
  return Variable<T>::op(std::move(out), {x}, [xn, v](VarNode<T>& self) {
    if (xn->requires_grad) xn->grad_buffer()[0] += self.grad[0] / v;
  });
}

template <typename T>
Variable<T> scalar_scale(const Variable<T>& x, T factor) {
  Tensor<T> out = Tensor<T>::full({1}, x.item() * factor);
  auto xn = x.node();
  return Variable<T>::op(std::move(out), {x}, [xn, factor](VarNode<T>& self) {
    if (xn->requires_grad) xn->grad_buffer()[0] += self.grad[0] * factor;
  });
}

template <typename T>
Variable<T> scalar_add(const Variable<T>& a, const Variable<T>& b) {
  Tensor<T> out = Tensor<T>::full({1}, a.item() + b.item());
  auto an = a.node();
  auto bn = b.node();
  return Variable<T>::op(std::move(out), {a, b}, [an, bn](VarNode<T>& self) {
    if (an->requires_grad) an->grad_buffer()[0] += self.grad[0];
    if (bn->requires_grad) bn->grad_buffer()[0] += self.grad[0];
  });
}

template <typename T>
Variable<T> scalar_constant(T v) {
  return Variable<T>::leaf(Tensor<T>::full({1}, v), false);
}

}  // namespace nuseg
