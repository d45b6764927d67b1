#pragma once

#include <cmath>

#include "pyraflow/ops.hpp"

namespace pyraflow {

/// Turns a distance-metric tensor D (w^2,H,W) into per-position filters:
/// softmax of -D^2 over the channel column, so every column is positive and
/// sums to one.
template <typename T>
TensorT<T> build_filters(const TensorT<T>& dist, TapeT<T>* tape = nullptr) {
  const int k = dist.channels();
  const int w = static_cast<int>(std::lround(std::sqrt(static_cast<double>(k))));
  if (w * w != k || w % 2 == 0)
    throw ShapeError("build_filters: channel count " + std::to_string(k) +
                     " is not an odd window squared");
  return channel_softmax(negative_square(dist, tape), tape);
}

/// Feature-driven local convolution: applies the per-position filter column
/// g(.,y,x) to the w x w neighborhood of every channel of `field` (zero
/// padded at borders). One filter bank is shared across all channels. This is
/// the fold/pack dot-product formulation computed in place: out(c,y,x) =
/// sum_k g(k,y,x) * field(c, y+dy(k), x+dx(k)).
template <typename T>
TensorT<T> f_lconv(const TensorT<T>& field, const TensorT<T>& filters, TapeT<T>* tape = nullptr) {
  if (field.rank() != 3 || filters.rank() != 3)
    throw ShapeError("f_lconv: inputs must be (C,H,W)");
  const int k = filters.channels();
  const int w = static_cast<int>(std::lround(std::sqrt(static_cast<double>(k))));
  if (w * w != k || w % 2 == 0)
    throw ShapeError("f_lconv: filter bank has " + std::to_string(k) +
                     " channels; need an odd window squared");
  if (field.height() != filters.height() || field.width() != filters.width())
    throw ShapeError("f_lconv: field " + shape_str(field.shape()) + " vs filters " +
                     shape_str(filters.shape()));

  const int c = field.channels(), hh = field.height(), ww = field.width();
  const int half = w / 2;
  const int64_t plane = static_cast<int64_t>(hh) * ww;
  TensorT<T> out(field.shape());
  const T* fp = field.data();
  const T* gp = filters.data();
  T* op = out.data();

  for (int ch = 0; ch < c; ++ch) {
    const T* fpl = fp + ch * plane;
    T* opl = op + ch * plane;
    for (int y = 0; y < hh; ++y) {
      for (int x = 0; x < ww; ++x) {
        T acc = 0;
        for (int dy = -half; dy <= half; ++dy) {
          const int sy = y + dy;
          if (sy < 0 || sy >= hh) continue;
          for (int dx = -half; dx <= half; ++dx) {
            const int sx = x + dx;
            if (sx < 0 || sx >= ww) continue;
            const int tap = (dy + half) * w + (dx + half);
            acc += gp[tap * plane + static_cast<int64_t>(y) * ww + x] *
                   fpl[static_cast<int64_t>(sy) * ww + sx];
          }
        }
        opl[static_cast<int64_t>(y) * ww + x] = acc;
      }
    }
  }

  if (tape) {
    tape->record("f_lconv", [field, filters, out, c, hh, ww, w, half, plane](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      TensorT<T>& gfield = t.grad_buffer(field);
      TensorT<T>& gfilt = t.grad_buffer(filters);
      const T* fp = field.data();
      const T* kp = filters.data();
      const T* gop = g->data();
      for (int ch = 0; ch < c; ++ch) {
        const T* fpl = fp + ch * plane;
        T* gfl = gfield.data() + ch * plane;
        const T* gpl = gop + ch * plane;
        for (int y = 0; y < hh; ++y) {
          for (int x = 0; x < ww; ++x) {
            const T go = gpl[static_cast<int64_t>(y) * ww + x];
            if (go == T(0)) continue;
            for (int dy = -half; dy <= half; ++dy) {
              const int sy = y + dy;
              if (sy < 0 || sy >= hh) continue;
              for (int dx = -half; dx <= half; ++dx) {
                const int sx = x + dx;
                if (sx < 0 || sx >= ww) continue;
                const int tap = (dy + half) * w + (dx + half);
                const int64_t at = tap * plane + static_cast<int64_t>(y) * ww + x;
                gfl[static_cast<int64_t>(sy) * ww + sx] += go * kp[at];
                gfilt.data()[at] += go * fpl[static_cast<int64_t>(sy) * ww + sx];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

} // namespace pyraflow
