#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "nuseg/autograd/variable.hpp"

namespace nuseg {

/// Mean binary cross-entropy on logits, numerically stable form
/// max(z,0) - z*y + log(1 + exp(-|z|)). target holds 0/1 values.
template <typename T>
Variable<T> bce_with_logits_mean(const Variable<T>& logits, const Tensor<T>& target) {
  const Tensor<T>& z = logits.value();
  check_same_shape(z, target, "bce_with_logits_mean");
  const int64_t n = z.numel();
  if (n == 0) throw std::invalid_argument("bce_with_logits_mean: empty input");
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double zi = static_cast<double>(z[i]);
    if (!std::isfinite(zi)) throw std::invalid_argument("bce_with_logits_mean: non-finite logit");
    acc += std::max(zi, 0.0) - zi * static_cast<double>(target[i]) +
           std::log1p(std::exp(-std::abs(zi)));
  }
  Tensor<T> out = Tensor<T>::full({1}, static_cast<T>(acc / static_cast<double>(n)));
  auto zn = logits.node();
  Tensor<T> zin = z;
  Tensor<T> tin = target;
  return Variable<T>::op(std::move(out), {logits}, [zn, zin, tin, n](VarNode<T>& self) {
    if (!zn->requires_grad) return;
    const T scale = self.grad[0] / static_cast<T>(n);
    T* gz = zn->grad_buffer().data();
    for (int64_t i = 0; i < n; ++i) {
      const T zi = zin[i];
      T p;
      if (zi >= T(0)) {
        p = T(1) / (T(1) + std::exp(-zi));
      } else {
        const T e = std::exp(zi);
        p = e / (T(1) + e);
      }
      gz[i] += scale * (p - tin[i]);
    }
  });
}

/// Mean multiclass cross-entropy: -log softmax(logits)[target], averaged over
/// all N*H*W pixels. logits are [N,C,H,W], target class indices [N,H,W].
template <typename T>
Variable<T> softmax_ce_mean(const Variable<T>& logits, const Tensor<int32_t>& target) {
  const Tensor<T>& z = logits.value();
  if (z.ndim() != 4) throw std::invalid_argument("softmax_ce_mean: expected NCHW logits");
  const int64_t n = z.dim(0), c = z.dim(1), h = z.dim(2), w = z.dim(3);
  if (target.ndim() != 3 || target.dim(0) != n || target.dim(1) != h || target.dim(2) != w)
    throw std::invalid_argument("softmax_ce_mean: target shape must be [N,H,W]");
  const int64_t area = h * w;
  const int64_t pixels = n * area;

  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const T* base = z.data() + i * c * area;
    for (int64_t j = 0; j < area; ++j) {
      const int32_t t = target[i * area + j];
      if (t < 0 || t >= c)
        throw std::invalid_argument("softmax_ce_mean: target class " + std::to_string(t) +
                                    " outside [0," + std::to_string(c) + ")");
      T zmax = base[j];
      for (int64_t ch = 1; ch < c; ++ch) zmax = std::max(zmax, base[ch * area + j]);
      double lse = 0.0;
      for (int64_t ch = 0; ch < c; ++ch)
        lse += std::exp(static_cast<double>(base[ch * area + j] - zmax));
      acc += std::log(lse) + static_cast<double>(zmax) - static_cast<double>(base[t * area + j]);
    }
  }
  Tensor<T> out = Tensor<T>::full({1}, static_cast<T>(acc / static_cast<double>(pixels)));

  auto zn = logits.node();
  Tensor<T> zin = z;
  Tensor<int32_t> tin = target;
  return Variable<T>::op(std::move(out), {logits}, [=](VarNode<T>& self) {
    if (!zn->requires_grad) return;
    const T scale = self.grad[0] / static_cast<T>(pixels);
    for (int64_t i = 0; i < n; ++i) {
      const T* base = zin.data() + i * c * area;
      T* gbase = zn->grad_buffer().data() + i * c * area;
      for (int64_t j = 0; j < area; ++j) {
        T zmax = base[j];
        for (int64_t ch = 1; ch < c; ++ch) zmax = std::max(zmax, base[ch * area + j]);
        T denom = T(0);
        for (int64_t ch = 0; ch < c; ++ch) denom += std::exp(base[ch * area + j] - zmax);
        const int32_t t = tin[i * area + j];
        for (int64_t ch = 0; ch < c; ++ch) {
          const T p = std::exp(base[ch * area + j] - zmax) / denom;
          gbase[ch * area + j] += scale * (p - (ch == t ? T(1) : T(0)));
        }
      }
    }
  });
}

/// Channel softmax of NCHW logits (used for prediction probabilities).
template <typename T>
Variable<T> softmax_channels(const Variable<T>& x) {
  const Tensor<T>& z = x.value();
  if (z.ndim() != 4) throw std::invalid_argument("softmax_channels: expected NCHW input");
  const int64_t n = z.dim(0), c = z.dim(1), area = z.dim(2) * z.dim(3);
  Tensor<T> out(z.shape());
  for (int64_t i = 0; i < n; ++i) {
    const T* base = z.data() + i * c * area;
    T* obase = out.data() + i * c * area;
    for (int64_t j = 0; j < area; ++j) {
      T zmax = base[j];
      for (int64_t ch = 1; ch < c; ++ch) zmax = std::max(zmax, base[ch * area + j]);
      T denom = T(0);
      for (int64_t ch = 0; ch < c; ++ch) {
        const T e = std::exp(base[ch * area + j] - zmax);
        obase[ch * area + j] = e;
        denom += e;
      }
      for (int64_t ch = 0; ch < c; ++ch) obase[ch * area + j] /= denom;
    }
  }
  auto xn = x.node();
  Tensor<T> y = out;
  return Variable<T>::op(std::move(out), {x}, [xn, y, n, c, area](VarNode<T>& self) {
    if (!xn->requires_grad) return;
    const T* g = self.grad.data();
    const T* py = y.data();
    T* gx = xn->grad_buffer().data();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < area; ++j) {
        const int64_t off = i * c * area + j;
        T dot = T(0);
        for (int64_t ch = 0; ch < c; ++ch) dot += g[off + ch * area] * py[off + ch * area];
        for (int64_t ch = 0; ch < c; ++ch)
          gx[off + ch * area] += py[off + ch * area] * (g[off + ch * area] - dot);
      }
  });
}

/// Soft Jaccard index as a ratio of sums over every element of probs:
/// (sum(p*m) + eps) / (sum(p) + sum(m) - sum(p*m) + eps). Equals 1 for an
/// exact match, including the all-background case. target holds 0/1 values.
template <typename T>
Variable<T> soft_jaccard_binary(const Variable<T>& probs, const Tensor<T>& target, T eps) {
  const Tensor<T>& p = probs.value();
  check_same_shape(p, target, "soft_jaccard_binary");
  const int64_t n = p.numel();
  double inter = 0.0, total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double pi = static_cast<double>(p[i]);
    if (!std::isfinite(pi)) throw std::invalid_argument("soft_jaccard_binary: non-finite prob");
    inter += pi * static_cast<double>(target[i]);
    total += pi + static_cast<double>(target[i]);
  }
  const double a = inter + static_cast<double>(eps);
  const double b = total - inter + static_cast<double>(eps);
  Tensor<T> out = Tensor<T>::full({1}, static_cast<T>(a / b));
  auto pn = probs.node();
  Tensor<T> pin = p;
  Tensor<T> tin = target;
  return Variable<T>::op(std::move(out), {probs}, [pn, pin, tin, n, a, b](VarNode<T>& self) {
    if (!pn->requires_grad) return;
    const T g = self.grad[0];
    T* gp = pn->grad_buffer().data();
    const T b2 = static_cast<T>(b * b);
    for (int64_t i = 0; i < n; ++i) {
      const T m = tin[i];
      // dJ/dp = (m*b - a*(1-m)) / b^2
      gp[i] += g * (m * static_cast<T>(b) - static_cast<T>(a) * (T(1) - m)) / b2;
    }
  });
}

/// Per-class soft Jaccard over one channel of NCHW probabilities against an
/// integer mask: m = (target == class_id).
template <typename T>
Variable<T> soft_jaccard_class(const Variable<T>& probs, const Tensor<int32_t>& target,
                               int64_t class_id, T eps) {
  const Tensor<T>& p = probs.value();
  if (p.ndim() != 4) throw std::invalid_argument("soft_jaccard_class: expected NCHW probs");
  const int64_t n = p.dim(0), c = p.dim(1), area = p.dim(2) * p.dim(3);
  if (target.numel() != n * area)
    throw std::invalid_argument("soft_jaccard_class: target element count mismatch");
  if (class_id < 0 || class_id >= c)
    throw std::invalid_argument("soft_jaccard_class: class outside channel range");

  double inter = 0.0, total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const T* ch = p.data() + (i * c + class_id) * area;
    for (int64_t j = 0; j < area; ++j) {
      const double m = target[i * area + j] == class_id ? 1.0 : 0.0;
      inter += static_cast<double>(ch[j]) * m;
      total += static_cast<double>(ch[j]) + m;
    }
  }
  const double a = inter + static_cast<double>(eps);
  const double b = total - inter + static_cast<double>(eps);
  Tensor<T> out = Tensor<T>::full({1}, static_cast<T>(a / b));
  auto pn = probs.node();
  Tensor<int32_t> tin = target;
  return Variable<T>::op(std::move(out), {probs}, [=](VarNode<T>& self) {
    if (!pn->requires_grad) return;
    const T g = self.grad[0];
    const T b2 = static_cast<T>(b * b);
    for (int64_t i = 0; i < n; ++i) {
      T* gp = pn->grad_buffer().data() + (i * c + class_id) * area;
      for (int64_t j = 0; j < area; ++j) {
        const T m = tin[i * area + j] == class_id ? T(1) : T(0);
        gp[j] += g * (m * static_cast<T>(b) - static_cast<T>(a) * (T(1) - m)) / b2;
      }
    }
  });
}

}  // namespace nuseg
