#pragma once

#include <cmath>

#include "pyraflow/ops.hpp"

namespace pyraflow {

/// Bilinear displacement of a feature map by a flow field. Every channel of
/// `feature` is sampled at (x + u, y + v); the four grid neighbors of the
/// source point are blended with (1-|dx|)(1-|dy|) weights and neighbors that
/// fall off the grid contribute zero. Differentiable in both the feature and
/// the flow; at exactly integer source coordinates the flow derivative takes
/// the right-continuous branch.
template <typename T>
TensorT<T> f_warp(const TensorT<T>& feature, const TensorT<T>& flow, TapeT<T>* tape = nullptr) {
  if (feature.rank() != 3 || flow.rank() != 3)
    throw ShapeError("f_warp: inputs must be (C,H,W)");
  if (flow.channels() != 2)
    throw ShapeError("f_warp: flow must have 2 channels, got " + std::to_string(flow.channels()));
  if (feature.height() != flow.height() || feature.width() != flow.width())
    throw ShapeError("f_warp: feature " + shape_str(feature.shape()) + " vs flow " +
                     shape_str(flow.shape()));

  const int c = feature.channels(), h = feature.height(), w = feature.width();
  const int64_t plane = static_cast<int64_t>(h) * w;
  TensorT<T> out(feature.shape());
  const T* fp = feature.data();
  const T* u = flow.data();
  const T* v = flow.data() + plane;
  T* op = out.data();

  parallel_for(h, [&](int64_t y0, int64_t y1) {
    for (int64_t y = y0; y < y1; ++y) {
      for (int x = 0; x < w; ++x) {
        const int64_t i = y * w + x;
        const T xs = static_cast<T>(x) + u[i];
        const T ys = static_cast<T>(y) + v[i];
        const int ix0 = static_cast<int>(std::floor(xs));
        const int iy0 = static_cast<int>(std::floor(ys));
        const T wx1 = xs - static_cast<T>(ix0), wx0 = T(1) - wx1;
        const T wy1 = ys - static_cast<T>(iy0), wy0 = T(1) - wy1;
        const bool x0in = ix0 >= 0 && ix0 < w, x1in = ix0 + 1 >= 0 && ix0 + 1 < w;
        const bool y0in = iy0 >= 0 && iy0 < h, y1in = iy0 + 1 >= 0 && iy0 + 1 < h;
        for (int ch = 0; ch < c; ++ch) {
          const T* fpl = fp + ch * plane;
          T acc = 0;
          if (y0in) {
            if (x0in) acc += fpl[iy0 * w + ix0] * wx0 * wy0;
            if (x1in) acc += fpl[iy0 * w + ix0 + 1] * wx1 * wy0;
          }
          if (y1in) {
            if (x0in) acc += fpl[(iy0 + 1) * w + ix0] * wx0 * wy1;
            if (x1in) acc += fpl[(iy0 + 1) * w + ix0 + 1] * wx1 * wy1;
          }
          op[ch * plane + i] = acc;
        }
      }
    }
  });

  if (tape) {
    tape->record("f_warp", [feature, flow, out, c, h, w, plane](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      TensorT<T>& gfeat = t.grad_buffer(feature);
      TensorT<T>& gflow = t.grad_buffer(flow);
      const T* fp = feature.data();
      const T* u = flow.data();
      const T* v = flow.data() + plane;
      const T* gp = g->data();
      T* gf = gfeat.data();
      T* gu = gflow.data();
      T* gv = gflow.data() + plane;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const int64_t i = static_cast<int64_t>(y) * w + x;
          const T xs = static_cast<T>(x) + u[i];
          const T ys = static_cast<T>(y) + v[i];
          const int ix0 = static_cast<int>(std::floor(xs));
          const int iy0 = static_cast<int>(std::floor(ys));
          const T wx1 = xs - static_cast<T>(ix0), wx0 = T(1) - wx1;
          const T wy1 = ys - static_cast<T>(iy0), wy0 = T(1) - wy1;
          const bool x0in = ix0 >= 0 && ix0 < w, x1in = ix0 + 1 >= 0 && ix0 + 1 < w;
          const bool y0in = iy0 >= 0 && iy0 < h, y1in = iy0 + 1 >= 0 && iy0 + 1 < h;
          T du = 0, dv = 0;
          for (int ch = 0; ch < c; ++ch) {
            const T* fpl = fp + ch * plane;
            T* gfl = gf + ch * plane;
            const T go = gp[ch * plane + i];
            if (go == T(0)) continue;
            T f00 = 0, f01 = 0, f10 = 0, f11 = 0;
            if (y0in && x0in) {
              f00 = fpl[iy0 * w + ix0];
              gfl[iy0 * w + ix0] += go * wx0 * wy0;
            }
            if (y0in && x1in) {
              f01 = fpl[iy0 * w + ix0 + 1];
              gfl[iy0 * w + ix0 + 1] += go * wx1 * wy0;
            }
            if (y1in && x0in) {
              f10 = fpl[(iy0 + 1) * w + ix0];
              gfl[(iy0 + 1) * w + ix0] += go * wx0 * wy1;
            }
            if (y1in && x1in) {
              f11 = fpl[(iy0 + 1) * w + ix0 + 1];
              gfl[(iy0 + 1) * w + ix0 + 1] += go * wx1 * wy1;
            }
            du += go * ((f01 - f00) * wy0 + (f11 - f10) * wy1);
            dv += go * ((f10 - f00) * wx0 + (f11 - f01) * wx1);
          }
          gu[i] += du;
          gv[i] += dv;
        }
      }
    });
  }
  return out;
}

/// Image warping is the same bilinear displacement applied to a 3-channel
/// image; kept as a named entry point for the occlusion path.
template <typename T>
TensorT<T> warp_image(const TensorT<T>& image, const TensorT<T>& flow, TapeT<T>* tape = nullptr) {
  return f_warp(image, flow, tape);
}

} // namespace pyraflow
