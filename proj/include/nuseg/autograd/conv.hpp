#pragma once

#include <cstring>
#include <stdexcept>
#include <vector>

#include "nuseg/autograd/variable.hpp"
#include "nuseg/core/gemm.hpp"

namespace nuseg {

namespace detail {

// Column-buffer size cap; large images are processed in output-row bands.
inline constexpr int64_t kConvColBudget = int64_t(1) << 23;  // elements

/// Fills col[K, (oy1-oy0)*Wo] for the output-row band [oy0, oy1); stride is 1.
template <typename T>
void im2col_band(const T* x, int64_t c_in, int64_t h, int64_t w, int64_t kh, int64_t kw,
                 int64_t pad, int64_t dil, int64_t wo, int64_t oy0, int64_t oy1, T* col) {
  const int64_t rows = oy1 - oy0;
  for (int64_t c = 0; c < c_in; ++c) {
    const T* plane = x + c * h * w;
    for (int64_t ki = 0; ki < kh; ++ki) {
      for (int64_t kj = 0; kj < kw; ++kj) {
        T* row = col + ((c * kh + ki) * kw + kj) * rows * wo;
        const int64_t dy = ki * dil - pad;
        const int64_t dx = kj * dil - pad;
        const int64_t ox_lo = std::max<int64_t>(0, -dx);
        const int64_t ox_hi = std::min<int64_t>(wo, w - dx);
        for (int64_t oy = oy0; oy < oy1; ++oy) {
          T* dst = row + (oy - oy0) * wo;
          const int64_t sy = oy + dy;
          if (sy < 0 || sy >= h || ox_lo >= ox_hi) {
            std::memset(dst, 0, sizeof(T) * static_cast<size_t>(wo));
            continue;
          }
          if (ox_lo > 0) std::memset(dst, 0, sizeof(T) * static_cast<size_t>(ox_lo));
          std::memcpy(dst + ox_lo, plane + sy * w + ox_lo + dx,
                      sizeof(T) * static_cast<size_t>(ox_hi - ox_lo));
          if (ox_hi < wo) std::memset(dst + ox_hi, 0, sizeof(T) * static_cast<size_t>(wo - ox_hi));
        }
      }
    }
  }
}

/// Scatters band column gradients back onto the input plane (+=).
template <typename T>
void col2im_band(const T* col, int64_t c_in, int64_t h, int64_t w, int64_t kh, int64_t kw,
                 int64_t pad, int64_t dil, int64_t wo, int64_t oy0, int64_t oy1, T* x) {
  const int64_t rows = oy1 - oy0;
  for (int64_t c = 0; c < c_in; ++c) {
    T* plane = x + c * h * w;
    for (int64_t ki = 0; ki < kh; ++ki) {
      for (int64_t kj = 0; kj < kw; ++kj) {
        const T* row = col + ((c * kh + ki) * kw + kj) * rows * wo;
        const int64_t dy = ki * dil - pad;
        const int64_t dx = kj * dil - pad;
        const int64_t ox_lo = std::max<int64_t>(0, -dx);
        const int64_t ox_hi = std::min<int64_t>(wo, w - dx);
        for (int64_t oy = oy0; oy < oy1; ++oy) {
          const int64_t sy = oy + dy;
          if (sy < 0 || sy >= h) continue;
          const T* src = row + (oy - oy0) * wo;
          T* dst = plane + sy * w + dx;
          for (int64_t ox = ox_lo; ox < ox_hi; ++ox) dst[ox] += src[ox];
        }
      }
    }
  }
}

}  // namespace detail

/// Stride-1 2D cross-correlation over NCHW input. weight is [Cout,Cin,kh,kw],
/// bias [Cout] or undefined. Output spatial size is H + 2*pad - dil*(kh-1).
/// Runs as im2col + GEMM over bounded output-row bands; column buffers are
/// rebuilt in the backward pass instead of being kept alive with the graph.
template <typename T>
Variable<T> conv2d(const Variable<T>& x, const Variable<T>& weight, const Variable<T>& bias,
                   int64_t pad, int64_t dil = 1) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = weight.value();
  if (xv.ndim() != 4 || wv.ndim() != 4)
    throw std::invalid_argument("conv2d: expected NCHW input and OIHW weight");
  const int64_t n = xv.dim(0), c_in = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const int64_t c_out = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (wv.dim(1) != c_in)
    throw std::invalid_argument("conv2d: weight expects " + std::to_string(wv.dim(1)) +
                                " input channels, got " + std::to_string(c_in));
  const int64_t ho = h + 2 * pad - dil * (kh - 1);
  const int64_t wo = w + 2 * pad - dil * (kw - 1);
  if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: output would be empty");
  const int64_t k = c_in * kh * kw;
  const int64_t band =
      std::max<int64_t>(1, std::min(ho, detail::kConvColBudget / std::max<int64_t>(1, k * wo)));

  Tensor<T> out({n, c_out, ho, wo});
  std::vector<T> col(static_cast<size_t>(k * band * wo));
  const bool has_bias = bias.defined();
  for (int64_t i = 0; i < n; ++i) {
    T* out_i = out.data() + i * c_out * ho * wo;
    for (int64_t oy0 = 0; oy0 < ho; oy0 += band) {
      const int64_t oy1 = std::min(ho, oy0 + band);
      const int64_t cols = (oy1 - oy0) * wo;
      detail::im2col_band(xv.data() + i * c_in * h * w, c_in, h, w, kh, kw, pad, dil, wo, oy0, oy1,
                          col.data());
      // Write each band into the strided output slab (leading dim ho*wo).
      gemm(false, false, c_out, cols, k, T(1), wv.data(), k, col.data(), cols, T(0),
           out_i + oy0 * wo, ho * wo);
    }
    if (has_bias) {
      const T* bv = bias.value().data();
      for (int64_t c = 0; c < c_out; ++c) {
        T* row = out_i + c * ho * wo;
        const T bc = bv[c];
        for (int64_t j = 0; j < ho * wo; ++j) row[j] += bc;
      }
    }
  }

  auto xn = x.node();
  auto wn = weight.node();
  auto bn = has_bias ? bias.node() : nullptr;
  Tensor<T> xin = xv;
  Tensor<T> win = wv;
  std::vector<Variable<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);

  auto backprop = [=](VarNode<T>& self) {
    const T* g = self.grad.data();
    std::vector<T> colbuf(static_cast<size_t>(k * band * wo));
    std::vector<T> dcol;
    if (xn->requires_grad) dcol.resize(static_cast<size_t>(k * band * wo));
    for (int64_t i = 0; i < n; ++i) {
      const T* g_i = g + i * c_out * ho * wo;
      for (int64_t oy0 = 0; oy0 < ho; oy0 += band) {
        const int64_t oy1 = std::min(ho, oy0 + band);
        const int64_t cols = (oy1 - oy0) * wo;
        if (wn->requires_grad) {
          detail::im2col_band(xin.data() + i * c_in * h * w, c_in, h, w, kh, kw, pad, dil, wo, oy0,
                              oy1, colbuf.data());
          gemm(false, true, c_out, k, cols, T(1), g_i + oy0 * wo, ho * wo, colbuf.data(), cols,
               T(1), wn->grad_buffer().data(), k);
        }
        if (xn->requires_grad) {
          gemm(true, false, k, cols, c_out, T(1), win.data(), k, g_i + oy0 * wo, ho * wo, T(0),
               dcol.data(), cols);
          detail::col2im_band(dcol.data(), c_in, h, w, kh, kw, pad, dil, wo, oy0, oy1,
                              xn->grad_buffer().data() + i * c_in * h * w);
        }
      }
      if (bn && bn->requires_grad) {
        T* db = bn->grad_buffer().data();
        for (int64_t c = 0; c < c_out; ++c) {
          const T* row = g_i + c * ho * wo;
          T s = T(0);
          for (int64_t j = 0; j < ho * wo; ++j) s += row[j];
          db[c] += s;
        }
      }
    }
  };
  return Variable<T>::op(std::move(out), std::move(inputs), std::move(backprop));
}

}  // namespace nuseg
