#pragma once

#include <cmath>
#include <string>

#include "pyraflow/ops.hpp"

namespace pyraflow {

/// Search geometry of the matching step. `radius` is the maximum displacement
/// in pixels; `stride` is both the displacement tap spacing and the spatial
/// sampling stride, so the tap count stays (2*radius/stride + 1)^2 = 49 for
/// the (3,1) and (6,2) configurations used by the decoder.
struct MatchConfig {
  int radius = 3;
  int stride = 1;

  int taps_per_axis() const { return 2 * (radius / stride) + 1; }
  int channels() const { return taps_per_axis() * taps_per_axis(); }

  void validate() const {
    if (radius < 1 || stride < 1 || radius % stride != 0)
      throw ShapeError("MatchConfig: radius " + std::to_string(radius) +
                       " must be a positive multiple of stride " + std::to_string(stride));
  }
};

/// Matching cost of two descriptors: dot product over the feature length N,
/// divided by N.
template <typename T>
T correlate(const TensorT<T>& f1, const TensorT<T>& f2) {
  if (f1.size() != f2.size())
    throw ShapeError("correlate: length mismatch " + std::to_string(f1.size()) + " vs " +
                     std::to_string(f2.size()));
  T acc = 0;
  for (int64_t i = 0; i < f1.size(); ++i) acc += f1.data()[i] * f2.data()[i];
  return acc / static_cast<T>(f1.size());
}

/// Correlation costs evaluated on the sampled position grid only. Output is
/// (D, ceil(H/stride), ceil(W/stride)); channel (dy,dx) is row-major over dy
/// then dx with taps {-r, -r+stride, ..., r}. Displaced positions outside the
/// grid cost 0.
template <typename T>
TensorT<T> cost_volume_sampled(const TensorT<T>& f1, const TensorT<T>& f2,
                               const MatchConfig& cfg, TapeT<T>* tape = nullptr) {
  cfg.validate();
  if (!f1.same_shape(f2))
    throw ShapeError("cost_volume: feature shapes differ: " + shape_str(f1.shape()) + " vs " +
                     shape_str(f2.shape()));
  const int c = f1.channels(), h = f1.height(), w = f1.width();
  const int64_t plane = static_cast<int64_t>(h) * w;
  const int s = cfg.stride, r = cfg.radius;
  const int taps = cfg.taps_per_axis();
  const int hs = (h + s - 1) / s, ws = (w + s - 1) / s;
  const int64_t splane = static_cast<int64_t>(hs) * ws;
  TensorT<T> out(Shape{taps * taps, hs, ws});
  const T* p1 = f1.data();
  const T* p2 = f2.data();
  T* op = out.data();
  const T invc = T(1) / static_cast<T>(c);

  parallel_for(hs, [&](int64_t j0, int64_t j1) {
    for (int64_t j = j0; j < j1; ++j) {
      const int y = static_cast<int>(j) * s;
      for (int i = 0; i < ws; ++i) {
        const int x = i * s;
        for (int ty = 0; ty < taps; ++ty) {
          const int yy = y - r + ty * s;
          for (int tx = 0; tx < taps; ++tx) {
            const int xx = x - r + tx * s;
            T acc = 0;
            if (yy >= 0 && yy < h && xx >= 0 && xx < w) {
              const int64_t a = static_cast<int64_t>(y) * w + x;
              const int64_t b = static_cast<int64_t>(yy) * w + xx;
              for (int ch = 0; ch < c; ++ch) acc += p1[ch * plane + a] * p2[ch * plane + b];
              acc *= invc;
            }
            op[(static_cast<int64_t>(ty) * taps + tx) * splane + j * ws + i] = acc;
          }
        }
      }
    }
  });

  if (tape) {
    tape->record("cost_volume", [f1, f2, cfg, out, c, h, w, plane, s, r, taps, hs, ws, splane,
                                 invc](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      TensorT<T>& g1 = t.grad_buffer(f1);
      TensorT<T>& g2 = t.grad_buffer(f2);
      const T* p1 = f1.data();
      const T* p2 = f2.data();
      const T* gp = g->data();
      for (int j = 0; j < hs; ++j) {
        const int y = j * s;
        for (int i = 0; i < ws; ++i) {
          const int x = i * s;
          const int64_t a = static_cast<int64_t>(y) * w + x;
          for (int ty = 0; ty < taps; ++ty) {
            const int yy = y - r + ty * s;
            if (yy < 0 || yy >= h) continue;
            for (int tx = 0; tx < taps; ++tx) {
              const int xx = x - r + tx * s;
              if (xx < 0 || xx >= w) continue;
              const T go = gp[(static_cast<int64_t>(ty) * taps + tx) * splane +
                              static_cast<int64_t>(j) * ws + i] *
                           invc;
              if (go == T(0)) continue;
              const int64_t b = static_cast<int64_t>(yy) * w + xx;
              for (int ch = 0; ch < c; ++ch) {
                g1.data()[ch * plane + a] += go * p2[ch * plane + b];
                g2.data()[ch * plane + b] += go * p1[ch * plane + a];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

/// Expands a tensor sampled on a strided grid back to (C,H,W) by bilinear
/// interpolation between sampled neighbors (clamped at the far edges).
/// Identity when stride is 1.
template <typename T>
TensorT<T> grid_expand(const TensorT<T>& sampled, int stride, int h, int w,
                       TapeT<T>* tape = nullptr) {
  if (stride == 1) {
    if (sampled.height() != h || sampled.width() != w)
      throw ShapeError("grid_expand: extent mismatch at stride 1");
    return sampled;
  }
  const int c = sampled.channels(), hs = sampled.height(), ws = sampled.width();
  if (hs != (h + stride - 1) / stride || ws != (w + stride - 1) / stride)
    throw ShapeError("grid_expand: sampled grid " + shape_str(sampled.shape()) +
                     " does not cover (" + std::to_string(h) + "," + std::to_string(w) + ")");
  const int64_t splane = static_cast<int64_t>(hs) * ws;
  const int64_t plane = static_cast<int64_t>(h) * w;
  TensorT<T> out(Shape{c, h, w});

  // Interpolation weights per full-res coordinate.
  const T inv = T(1) / static_cast<T>(stride);
  auto coords = [inv](int v, int n, int& lo, int& hi, T& w1) {
    const T f = static_cast<T>(v) * inv;
    lo = static_cast<int>(std::floor(f));
    hi = lo + 1;
    w1 = f - static_cast<T>(lo);
    if (hi > n - 1) {
      hi = n - 1;
      lo = n - 1;
      w1 = 0;
    }
  };

  const T* sp = sampled.data();
  T* op = out.data();
  for (int ch = 0; ch < c; ++ch) {
    const T* spl = sp + ch * splane;
    T* opl = op + ch * plane;
    for (int y = 0; y < h; ++y) {
      int j0, j1;
      T wy1;
      coords(y, hs, j0, j1, wy1);
      for (int x = 0; x < w; ++x) {
        int i0, i1;
        T wx1;
        coords(x, ws, i0, i1, wx1);
        opl[static_cast<int64_t>(y) * w + x] =
            (1 - wy1) * ((1 - wx1) * spl[j0 * ws + i0] + wx1 * spl[j0 * ws + i1]) +
            wy1 * ((1 - wx1) * spl[j1 * ws + i0] + wx1 * spl[j1 * ws + i1]);
      }
    }
  }

  if (tape) {
    tape->record("grid_expand", [sampled, out, stride, c, h, w, hs, ws, splane, plane, inv,
                                 coords](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      TensorT<T>& gin = t.grad_buffer(sampled);
      const T* gp = g->data();
      for (int ch = 0; ch < c; ++ch) {
        T* ipl = gin.data() + ch * splane;
        const T* gpl = gp + ch * plane;
        for (int y = 0; y < h; ++y) {
          int j0, j1;
          T wy1;
          coords(y, hs, j0, j1, wy1);
          for (int x = 0; x < w; ++x) {
            int i0, i1;
            T wx1;
            coords(x, ws, i0, i1, wx1);
            const T go = gpl[static_cast<int64_t>(y) * w + x];
            ipl[j0 * ws + i0] += go * (1 - wy1) * (1 - wx1);
            ipl[j0 * ws + i1] += go * (1 - wy1) * wx1;
            ipl[j1 * ws + i0] += go * wy1 * (1 - wx1);
            ipl[j1 * ws + i1] += go * wy1 * wx1;
          }
        }
      }
    });
  }
  return out;
}

/// Full cost volume at the level's resolution: dense correlation at stride 1,
/// or sampled-grid correlation expanded back by spatial interpolation.
template <typename T>
TensorT<T> cost_volume(const TensorT<T>& f1, const TensorT<T>& f2, const MatchConfig& cfg,
                       TapeT<T>* tape = nullptr) {
  TensorT<T> sampled = cost_volume_sampled(f1, f2, cfg, tape);
  return grid_expand(sampled, cfg.stride, f1.height(), f1.width(), tape);
}

} // namespace pyraflow
