#pragma once

#include <cstring>
#include <stdexcept>
#include <vector>

#include "nuseg/autograd/variable.hpp"

namespace nuseg {

/// 2x2 stride-2 max pooling, ceil mode: odd inputs behave as if padded by one
/// row/column of -inf on the bottom/right, so Ho = ceil(H/2). Argmax positions
/// are kept for the backward scatter.
template <typename T>
Variable<T> maxpool2x(const Variable<T>& x) {
  const Tensor<T>& xv = x.value();
  if (xv.ndim() != 4) throw std::invalid_argument("maxpool2x: expected NCHW input");
  const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const int64_t ho = (h + 1) / 2, wo = (w + 1) / 2;
  Tensor<T> out({n, c, ho, wo});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out.numel()));

  const T* px = xv.data();
  T* po = out.data();
  int64_t* pa = argmax->data();
  for (int64_t nc = 0; nc < n * c; ++nc) {
    const T* plane = px + nc * h * w;
    for (int64_t oy = 0; oy < ho; ++oy) {
      for (int64_t ox = 0; ox < wo; ++ox) {
        const int64_t y0 = 2 * oy, x0 = 2 * ox;
        int64_t best = y0 * w + x0;
        T best_v = plane[best];
        if (x0 + 1 < w && plane[y0 * w + x0 + 1] > best_v) {
          best = y0 * w + x0 + 1;
          best_v = plane[best];
        }
        if (y0 + 1 < h) {
          if (plane[(y0 + 1) * w + x0] > best_v) {
            best = (y0 + 1) * w + x0;
            best_v = plane[best];
          }
          if (x0 + 1 < w && plane[(y0 + 1) * w + x0 + 1] > best_v) {
            best = (y0 + 1) * w + x0 + 1;
            best_v = plane[best];
          }
        }
        *po++ = best_v;
        *pa++ = nc * h * w + best;
      }
    }
  }

  auto xn = x.node();
  return Variable<T>::op(std::move(out), {x}, [xn, argmax](VarNode<T>& self) {
    if (!xn->requires_grad) return;
    T* gx = xn->grad_buffer().data();
    const T* g = self.grad.data();
    const int64_t m = self.grad.numel();
    const int64_t* idx = argmax->data();
    for (int64_t i = 0; i < m; ++i) gx[idx[i]] += g[i];
  });
}

namespace detail {

struct LerpTable {
  std::vector<int64_t> lo, hi;
  std::vector<double> frac;
};

/// Source sampling positions for 2x bilinear upsampling, half-pixel centers.
inline LerpTable bilinear2x_table(int64_t src, int64_t dst) {
  LerpTable t;
  t.lo.resize(static_cast<size_t>(dst));
  t.hi.resize(static_cast<size_t>(dst));
  t.frac.resize(static_cast<size_t>(dst));
  for (int64_t o = 0; o < dst; ++o) {
    double s = (static_cast<double>(o) + 0.5) * 0.5 - 0.5;
    if (s < 0) s = 0;
    int64_t lo = static_cast<int64_t>(s);
    if (lo > src - 1) lo = src - 1;
    const int64_t hi = std::min<int64_t>(lo + 1, src - 1);
    t.lo[static_cast<size_t>(o)] = lo;
    t.hi[static_cast<size_t>(o)] = hi;
    t.frac[static_cast<size_t>(o)] = s - static_cast<double>(lo);
  }
  return t;
}

}  // namespace detail

/// Bilinear x2 upsampling (half-pixel alignment), NCHW.
template <typename T>
Variable<T> upsample_bilinear2x(const Variable<T>& x) {
  const Tensor<T>& xv = x.value();
  if (xv.ndim() != 4) throw std::invalid_argument("upsample_bilinear2x: expected NCHW input");
  const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const int64_t ho = 2 * h, wo = 2 * w;
  auto ty = std::make_shared<detail::LerpTable>(detail::bilinear2x_table(h, ho));
  auto tx = std::make_shared<detail::LerpTable>(detail::bilinear2x_table(w, wo));

  Tensor<T> out({n, c, ho, wo});
  const T* px = xv.data();
  T* po = out.data();
  for (int64_t nc = 0; nc < n * c; ++nc) {
    const T* plane = px + nc * h * w;
    for (int64_t oy = 0; oy < ho; ++oy) {
      const T* r0 = plane + ty->lo[oy] * w;
      const T* r1 = plane + ty->hi[oy] * w;
      const T fy = static_cast<T>(ty->frac[oy]);
      T* dst = po + (nc * ho + oy) * wo;
      for (int64_t ox = 0; ox < wo; ++ox) {
        const int64_t x0 = tx->lo[ox], x1 = tx->hi[ox];
        const T fx = static_cast<T>(tx->frac[ox]);
        const T top = r0[x0] + fx * (r0[x1] - r0[x0]);
        const T bot = r1[x0] + fx * (r1[x1] - r1[x0]);
        dst[ox] = top + fy * (bot - top);
      }
    }
  }

  auto xn = x.node();
  return Variable<T>::op(std::move(out), {x}, [xn, ty, tx, n, c, h, w, ho, wo](VarNode<T>& self) {
    if (!xn->requires_grad) return;
    T* gx = xn->grad_buffer().data();
    const T* g = self.grad.data();
    for (int64_t nc = 0; nc < n * c; ++nc) {
      T* plane = gx + nc * h * w;
      for (int64_t oy = 0; oy < ho; ++oy) {
        const int64_t y0 = ty->lo[oy], y1 = ty->hi[oy];
        const T fy = static_cast<T>(ty->frac[oy]);
        const T* src = g + (nc * ho + oy) * wo;
        for (int64_t ox = 0; ox < wo; ++ox) {
          const int64_t x0 = tx->lo[ox], x1 = tx->hi[ox];
          const T fx = static_cast<T>(tx->frac[ox]);
          const T gv = src[ox];
          plane[y0 * w + x0] += (T(1) - fy) * (T(1) - fx) * gv;
          plane[y0 * w + x1] += (T(1) - fy) * fx * gv;
          plane[y1 * w + x0] += fy * (T(1) - fx) * gv;
          plane[y1 * w + x1] += fy * fx * gv;
        }
      }
    }
  });
}

/// Keeps the top-left ho x wo window. Used to undo the ceil-mode padding after
/// an upsample when the matching skip tensor is one row/column smaller.
template <typename T>
Variable<T> crop2d(const Variable<T>& x, int64_t ho, int64_t wo) {
  const Tensor<T>& xv = x.value();
  if (xv.ndim() != 4) throw std::invalid_argument("crop2d: expected NCHW input");
  const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (ho > h || wo > w) throw std::invalid_argument("crop2d: target larger than input");
  if (ho == h && wo == w) return x;
  Tensor<T> out({n, c, ho, wo});
  const T* px = xv.data();
  T* po = out.data();
  for (int64_t nc = 0; nc < n * c; ++nc)
    for (int64_t y = 0; y < ho; ++y)
      std::memcpy(po + (nc * ho + y) * wo, px + (nc * h + y) * w,
                  sizeof(T) * static_cast<size_t>(wo));
  auto xn = x.node();
  return Variable<T>::op(std::move(out), {x}, [xn, n, c, h, w, ho, wo](VarNode<T>& self) {
    if (!xn->requires_grad) return;
    T* gx = xn->grad_buffer().data();
    const T* g = self.grad.data();
    for (int64_t nc = 0; nc < n * c; ++nc)
      for (int64_t y = 0; y < ho; ++y) {
        T* dst = gx + (nc * h + y) * w;
        const T* src = g + (nc * ho + y) * wo;
        for (int64_t xcol = 0; xcol < wo; ++xcol) dst[xcol] += src[xcol];
      }
  });
}

/// x2 upsample followed by a crop to exactly (ho, wo).
template <typename T>
Variable<T> upsample_to(const Variable<T>& x, int64_t ho, int64_t wo) {
  return crop2d(upsample_bilinear2x(x), ho, wo);
}

/// Channel-dimension concatenation of two NCHW tensors.
template <typename T>
Variable<T> concat_channels(const Variable<T>& a, const Variable<T>& b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.ndim() != 4 || bv.ndim() != 4)
    throw std::invalid_argument("concat_channels: expected NCHW inputs");
  if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
    throw std::invalid_argument("concat_channels: mismatched batch or spatial dims " +
                                av.shape_string() + " vs " + bv.shape_string());
  const int64_t n = av.dim(0), ca = av.dim(1), cb = bv.dim(1), h = av.dim(2), w = av.dim(3);
  const int64_t area = h * w;
  Tensor<T> out({n, ca + cb, h, w});
  for (int64_t i = 0; i < n; ++i) {
    std::memcpy(out.data() + i * (ca + cb) * area, av.data() + i * ca * area,
                sizeof(T) * static_cast<size_t>(ca * area));
    std::memcpy(out.data() + (i * (ca + cb) + ca) * area, bv.data() + i * cb * area,
                sizeof(T) * static_cast<size_t>(cb * area));
  }
  auto an = a.node();
  auto bn = b.node();
  return Variable<T>::op(std::move(out), {a, b}, [an, bn, n, ca, cb, area](VarNode<T>& self) {
    const T* g = self.grad.data();
    for (int64_t i = 0; i < n; ++i) {
      if (an->requires_grad) {
        T* ga = an->grad_buffer().data() + i * ca * area;
        const T* src = g + i * (ca + cb) * area;
        for (int64_t j = 0; j < ca * area; ++j) ga[j] += src[j];
      }
      if (bn->requires_grad) {
        T* gb = bn->grad_buffer().data() + i * cb * area;
        const T* src = g + (i * (ca + cb) + ca) * area;
        for (int64_t j = 0; j < cb * area; ++j) gb[j] += src[j];
      }
    }
  });
}

}  // namespace nuseg
