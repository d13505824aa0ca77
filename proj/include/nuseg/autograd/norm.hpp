#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "nuseg/autograd/variable.hpp"

namespace nuseg {

/// Instance normalization: per-sample, per-channel statistics over H*W, with
/// affine parameters gamma/beta of shape [C]. Statistics are always taken from
/// the input (no running estimates), in training and inference alike.
template <typename T>
Variable<T> instance_norm(const Variable<T>& x, const Variable<T>& gamma, const Variable<T>& beta,
                          T eps) {
  const Tensor<T>& xv = x.value();
  if (xv.ndim() != 4) throw std::invalid_argument("instance_norm: expected NCHW input");
  const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (gamma.value().numel() != c || beta.value().numel() != c)
    throw std::invalid_argument("instance_norm: affine parameters must have C elements");
  const int64_t m = h * w;

  auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(n * c));
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(n * c));
  Tensor<T> out(xv.shape());
  const T* px = xv.data();
  const T* pg = gamma.value().data();
  const T* pb = beta.value().data();
  T* po = out.data();
  for (int64_t nc = 0; nc < n * c; ++nc) {
    const T* plane = px + nc * m;
    T mu = T(0);
    for (int64_t i = 0; i < m; ++i) mu += plane[i];
    mu /= static_cast<T>(m);
    T var = T(0);
    for (int64_t i = 0; i < m; ++i) {
      const T d = plane[i] - mu;
      var += d * d;
    }
    var /= static_cast<T>(m);
    const T inv = T(1) / std::sqrt(var + eps);
    (*mean)[nc] = mu;
    (*inv_std)[nc] = inv;
    const T gc = pg[nc % c], bc = pb[nc % c];
    T* dst = po + nc * m;
    for (int64_t i = 0; i < m; ++i) dst[i] = gc * (plane[i] - mu) * inv + bc;
  }

  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  Tensor<T> xin = xv;
  Tensor<T> gv = gamma.value();
  return Variable<T>::op(
      std::move(out), {x, gamma, beta}, [=](VarNode<T>& self) {
        const T* g = self.grad.data();
        const T* pxi = xin.data();
        for (int64_t nc = 0; nc < n * c; ++nc) {
          const int64_t ch = nc % c;
          const T mu = (*mean)[nc];
          const T inv = (*inv_std)[nc];
          const T gc = gv[ch];
          const T* gp = g + nc * m;
          const T* xp = pxi + nc * m;
          // Accumulate the three reductions the input gradient needs.
          T sum_dy = T(0), sum_dy_xhat = T(0);
          for (int64_t i = 0; i < m; ++i) {
            const T xhat = (xp[i] - mu) * inv;
            sum_dy += gp[i];
            sum_dy_xhat += gp[i] * xhat;
          }
          if (gn->requires_grad) gn->grad_buffer()[ch] += sum_dy_xhat;
          if (bn->requires_grad) bn->grad_buffer()[ch] += sum_dy;
          if (xn->requires_grad) {
            T* gx = xn->grad_buffer().data() + nc * m;
            const T mean_dy = sum_dy / static_cast<T>(m);
            const T mean_dy_xhat = sum_dy_xhat / static_cast<T>(m);
            for (int64_t i = 0; i < m; ++i) {
              const T xhat = (xp[i] - mu) * inv;
              gx[i] += gc * inv * (gp[i] - mean_dy - xhat * mean_dy_xhat);
            }
          }
        }
      });
}

/// Batch normalization over (N,H,W) per channel. In training mode batch
/// statistics normalize the activations and update the running estimates
/// in place (unbiased variance, PyTorch convention); in inference mode the
/// running estimates are applied as fixed affine factors.
template <typename T>
Variable<T> batch_norm(const Variable<T>& x, const Variable<T>& gamma, const Variable<T>& beta,
                       Tensor<T>& running_mean, Tensor<T>& running_var, T eps, T momentum,
                       bool training) {
  const Tensor<T>& xv = x.value();
  if (xv.ndim() != 4) throw std::invalid_argument("batch_norm: expected NCHW input");
  const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const int64_t m = n * h * w;
  const int64_t area = h * w;

  std::vector<T> mu_c(static_cast<size_t>(c)), inv_c(static_cast<size_t>(c));
  if (training) {
    for (int64_t ch = 0; ch < c; ++ch) {
      T mu = T(0);
      for (int64_t i = 0; i < n; ++i) {
        const T* plane = xv.data() + (i * c + ch) * area;
        for (int64_t j = 0; j < area; ++j) mu += plane[j];
      }
      mu /= static_cast<T>(m);
      T var = T(0);
      for (int64_t i = 0; i < n; ++i) {
        const T* plane = xv.data() + (i * c + ch) * area;
        for (int64_t j = 0; j < area; ++j) {
          const T d = plane[j] - mu;
          var += d * d;
        }
      }
      var /= static_cast<T>(m);
      mu_c[ch] = mu;
      inv_c[ch] = T(1) / std::sqrt(var + eps);
      const T unbiased = m > 1 ? var * static_cast<T>(m) / static_cast<T>(m - 1) : var;
      running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mu;
      running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * unbiased;
    }
  } else {
    for (int64_t ch = 0; ch < c; ++ch) {
      mu_c[ch] = running_mean[ch];
      inv_c[ch] = T(1) / std::sqrt(running_var[ch] + eps);
    }
  }

  Tensor<T> out(xv.shape());
  const T* pg = gamma.value().data();
  const T* pb = beta.value().data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* src = xv.data() + (i * c + ch) * area;
      T* dst = out.data() + (i * c + ch) * area;
      const T mu = mu_c[ch], inv = inv_c[ch], gc = pg[ch], bc = pb[ch];
      for (int64_t j = 0; j < area; ++j) dst[j] = gc * (src[j] - mu) * inv + bc;
    }

  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  Tensor<T> xin = xv;
  Tensor<T> gv = gamma.value();
  auto mu_s = std::make_shared<std::vector<T>>(std::move(mu_c));
  auto inv_s = std::make_shared<std::vector<T>>(std::move(inv_c));
  return Variable<T>::op(
      std::move(out), {x, gamma, beta}, [=](VarNode<T>& self) {
        const T* g = self.grad.data();
        for (int64_t ch = 0; ch < c; ++ch) {
          const T mu = (*mu_s)[ch], inv = (*inv_s)[ch], gc = gv[ch];
          T sum_dy = T(0), sum_dy_xhat = T(0);
          for (int64_t i = 0; i < n; ++i) {
            const T* gp = g + (i * c + ch) * area;
            const T* xp = xin.data() + (i * c + ch) * area;
            for (int64_t j = 0; j < area; ++j) {
              sum_dy += gp[j];
              sum_dy_xhat += gp[j] * (xp[j] - mu) * inv;
            }
          }
          if (gn->requires_grad) gn->grad_buffer()[ch] += sum_dy_xhat;
          if (bn->requires_grad) bn->grad_buffer()[ch] += sum_dy;
          if (!xn->requires_grad) continue;
          const T mean_dy = sum_dy / static_cast<T>(m);
          const T mean_dy_xhat = sum_dy_xhat / static_cast<T>(m);
          for (int64_t i = 0; i < n; ++i) {
            T* gx = xn->grad_buffer().data() + (i * c + ch) * area;
            const T* gp = g + (i * c + ch) * area;
            const T* xp = xin.data() + (i * c + ch) * area;
            if (training) {
              for (int64_t j = 0; j < area; ++j) {
                const T xhat = (xp[j] - mu) * inv;
                gx[j] += gc * inv * (gp[j] - mean_dy - xhat * mean_dy_xhat);
              }
            } else {
              for (int64_t j = 0; j < area; ++j) gx[j] += gc * inv * gp[j];
            }
          }
        }
      });
}

}  // namespace nuseg
