#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "pyraflow/tape.hpp"
#include "pyraflow/tensor.hpp"
#include "pyraflow/threadpool.hpp"

// Dense forward operators with analytic backward rules. Every op allocates a
// fresh output tensor; passing a tape records the backward closure. Feature
// maps are (channels, height, width), row-major with width fastest.

namespace pyraflow {

namespace detail {

template <typename T>
void check_conv_args(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* b,
                     const ConvSpec& spec) {
  if (x.rank() != 3) throw ShapeError("conv2d: input must be (C,H,W), got " + shape_str(x.shape()));
  if (w.rank() != 4)
    throw ShapeError("conv2d: weights must be (out,in,kh,kw), got " + shape_str(w.shape()));
  if (w.dim(0) != spec.out_channels || w.dim(1) != spec.in_channels ||
      w.dim(2) != spec.kernel_h || w.dim(3) != spec.kernel_w)
    throw ShapeError("conv2d: weights " + shape_str(w.shape()) + " do not match spec (" +
                     std::to_string(spec.out_channels) + "," + std::to_string(spec.in_channels) +
                     "," + std::to_string(spec.kernel_h) + "," + std::to_string(spec.kernel_w) +
                     ")");
  if (x.channels() != spec.in_channels)
    throw ShapeError("conv2d: input has " + std::to_string(x.channels()) +
                     " channels but weights expect " + std::to_string(spec.in_channels) +
                     " (dim 1 of weights)");
  if (b && (b->rank() != 1 || b->dim(0) != spec.out_channels))
    throw ShapeError("conv2d: bias must be (" + std::to_string(spec.out_channels) + "), got " +
                     shape_str(b->shape()));
  if (spec.stride < 1) throw ShapeError("conv2d: stride must be >= 1");
}

// Valid output-column range so that ix = ox*stride - pad + kx stays in [0, w).
inline void col_range(int out_w, int in_w, int stride, int pad, int kx, int& lo, int& hi) {
  // smallest ox with ox*stride - pad + kx >= 0
  int num = pad - kx;
  lo = num <= 0 ? 0 : (num + stride - 1) / stride;
  // largest ox with ox*stride - pad + kx <= in_w-1
  hi = (in_w - 1 + pad - kx) / stride;
  if (hi > out_w - 1) hi = out_w - 1;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Convolution

template <typename T>
TensorT<T> conv2d_raw(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* b,
                      const ConvSpec& spec) {
  detail::check_conv_args(x, w, b, spec);
  const int in_h = x.height(), in_w = x.width();
  const int out_h = spec.out_h(in_h), out_w = spec.out_w(in_w);
  if (out_h < 1 || out_w < 1)
    throw ShapeError("conv2d: kernel larger than padded input " + shape_str(x.shape()));
  TensorT<T> out(Shape{spec.out_channels, out_h, out_w});

  const T* xp = x.data();
  const T* wp = w.data();
  T* op = out.data();
  const int ci = spec.in_channels, kh = spec.kernel_h, kw = spec.kernel_w;
  const int s = spec.stride, ph = spec.pad_h, pw = spec.pad_w;

  parallel_for(spec.out_channels, [&](int64_t oc0, int64_t oc1) {
    for (int64_t oc = oc0; oc < oc1; ++oc) {
      T* oplane = op + oc * out_h * out_w;
      const T bias = b ? b->data()[oc] : T(0);
      std::fill(oplane, oplane + out_h * out_w, bias);
      for (int ic = 0; ic < ci; ++ic) {
        const T* xplane = xp + static_cast<int64_t>(ic) * in_h * in_w;
        const T* wbase = wp + ((oc * ci + ic) * kh) * kw;
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            const T wv = wbase[ky * kw + kx];
            if (wv == T(0)) continue;
            int lo, hi;
            detail::col_range(out_w, in_w, s, pw, kx, lo, hi);
            if (lo > hi) continue;
            for (int oy = 0; oy < out_h; ++oy) {
              const int iy = oy * s - ph + ky;
              if (iy < 0 || iy >= in_h) continue;
              const T* xrow = xplane + static_cast<int64_t>(iy) * in_w - pw + kx;
              T* orow = oplane + static_cast<int64_t>(oy) * out_w;
              if (s == 1) {
                for (int ox = lo; ox <= hi; ++ox) orow[ox] += wv * xrow[ox];
              } else {
                for (int ox = lo; ox <= hi; ++ox) orow[ox] += wv * xrow[ox * s];
              }
            }
          }
        }
      }
    }
  });
  return out;
}

/// dL/dinput of conv2d: gathers grad_out back through the kernel.
template <typename T>
TensorT<T> conv2d_backward_input(const TensorT<T>& gout, const TensorT<T>& w, const ConvSpec& spec,
                                 int in_h, int in_w) {
  TensorT<T> gin(Shape{spec.in_channels, in_h, in_w});
  const T* gp = gout.data();
  const T* wp = w.data();
  T* ip = gin.data();
  const int out_h = gout.height(), out_w = gout.width();
  const int ci = spec.in_channels, co = spec.out_channels;
  const int kh = spec.kernel_h, kw = spec.kernel_w;
  const int s = spec.stride, ph = spec.pad_h, pw = spec.pad_w;

  parallel_for(ci, [&](int64_t ic0, int64_t ic1) {
    for (int64_t ic = ic0; ic < ic1; ++ic) {
      T* iplane = ip + ic * in_h * in_w;
      for (int oc = 0; oc < co; ++oc) {
        const T* gplane = gp + static_cast<int64_t>(oc) * out_h * out_w;
        const T* wbase = wp + ((oc * ci + ic) * kh) * kw;
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            const T wv = wbase[ky * kw + kx];
            if (wv == T(0)) continue;
            int lo, hi;
            detail::col_range(out_w, in_w, s, pw, kx, lo, hi);
            if (lo > hi) continue;
            for (int oy = 0; oy < out_h; ++oy) {
              const int iy = oy * s - ph + ky;
              if (iy < 0 || iy >= in_h) continue;
              const T* grow = gplane + static_cast<int64_t>(oy) * out_w;
              T* irow = iplane + static_cast<int64_t>(iy) * in_w - pw + kx;
              if (s == 1) {
                for (int ox = lo; ox <= hi; ++ox) irow[ox] += wv * grow[ox];
              } else {
                for (int ox = lo; ox <= hi; ++ox) irow[ox * s] += wv * grow[ox];
              }
            }
          }
        }
      }
    }
  });
  return gin;
}

template <typename T>
TensorT<T> conv2d_backward_weights(const TensorT<T>& gout, const TensorT<T>& x,
                                   const ConvSpec& spec) {
  TensorT<T> gw(Shape{spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w});
  const T* gp = gout.data();
  const T* xp = x.data();
  T* wp = gw.data();
  const int in_h = x.height(), in_w = x.width();
  const int out_h = gout.height(), out_w = gout.width();
  const int ci = spec.in_channels;
  const int kh = spec.kernel_h, kw = spec.kernel_w;
  const int s = spec.stride, ph = spec.pad_h, pw = spec.pad_w;

  parallel_for(spec.out_channels, [&](int64_t oc0, int64_t oc1) {
    for (int64_t oc = oc0; oc < oc1; ++oc) {
      const T* gplane = gp + oc * out_h * out_w;
      for (int ic = 0; ic < ci; ++ic) {
        const T* xplane = xp + static_cast<int64_t>(ic) * in_h * in_w;
        T* wbase = wp + ((oc * ci + ic) * kh) * kw;
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            int lo, hi;
            detail::col_range(out_w, in_w, s, pw, kx, lo, hi);
            if (lo > hi) continue;
            T acc = 0;
            for (int oy = 0; oy < out_h; ++oy) {
              const int iy = oy * s - ph + ky;
              if (iy < 0 || iy >= in_h) continue;
              const T* grow = gplane + static_cast<int64_t>(oy) * out_w;
              const T* xrow = xplane + static_cast<int64_t>(iy) * in_w - pw + kx;
              if (s == 1) {
                for (int ox = lo; ox <= hi; ++ox) acc += grow[ox] * xrow[ox];
              } else {
                for (int ox = lo; ox <= hi; ++ox) acc += grow[ox] * xrow[ox * s];
              }
            }
            wbase[ky * kw + kx] += acc;
          }
        }
      }
    }
  });
  return gw;
}

template <typename T>
TensorT<T> conv2d_backward_bias(const TensorT<T>& gout) {
  TensorT<T> gb(Shape{gout.channels()});
  const T* gp = gout.data();
  const int64_t plane = static_cast<int64_t>(gout.height()) * gout.width();
  for (int oc = 0; oc < gout.channels(); ++oc) {
    T acc = 0;
    for (int64_t i = 0; i < plane; ++i) acc += gp[oc * plane + i];
    gb.data()[oc] = acc;
  }
  return gb;
}

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                  const ConvSpec& spec, TapeT<T>* tape = nullptr) {
  TensorT<T> out = conv2d_raw(x, w, &b, spec);
  if (tape) {
    const int in_h = x.height(), in_w = x.width();
    tape->record("conv2d", [x, w, b, spec, in_h, in_w, out](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      accumulate(t.grad_buffer(x), conv2d_backward_input(*g, w, spec, in_h, in_w));
      accumulate(t.grad_buffer(w), conv2d_backward_weights(*g, x, spec));
      accumulate(t.grad_buffer(b), conv2d_backward_bias(*g));
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transposed convolution (x2 upsampling, no bias)

template <typename T>
void check_deconv_args(const TensorT<T>& x, const TensorT<T>& w, const ConvSpec& spec) {
  if (x.rank() != 3) throw ShapeError("deconv2d: input must be (C,H,W)");
  if (w.rank() != 4)
    throw ShapeError("deconv2d: weights must be (in,out,kh,kw), got " + shape_str(w.shape()));
  if (w.dim(0) != spec.in_channels || w.dim(1) != spec.out_channels ||
      w.dim(2) != spec.kernel_h || w.dim(3) != spec.kernel_w)
    throw ShapeError("deconv2d: weights " + shape_str(w.shape()) + " do not match spec");
  if (x.channels() != spec.in_channels)
    throw ShapeError("deconv2d: input has " + std::to_string(x.channels()) +
                     " channels, spec expects " + std::to_string(spec.in_channels));
  if (spec.kernel_h != spec.kernel_w || spec.pad_h != spec.pad_w ||
      spec.kernel_h - 2 * spec.pad_h != spec.stride)
    throw ShapeError("deconv2d: kernel/pad combination does not produce exact x" +
                     std::to_string(spec.stride) + " upsampling (need kernel - 2*pad == stride)");
}

template <typename T>
TensorT<T> deconv2d_raw(const TensorT<T>& x, const TensorT<T>& w, const ConvSpec& spec) {
  check_deconv_args(x, w, spec);
  const int in_h = x.height(), in_w = x.width();
  const int out_h = in_h * spec.stride, out_w = in_w * spec.stride;
  TensorT<T> out(Shape{spec.out_channels, out_h, out_w});
  const T* xp = x.data();
  const T* wp = w.data();
  T* op = out.data();
  const int ci = spec.in_channels, co = spec.out_channels;
  const int kh = spec.kernel_h, kw = spec.kernel_w;
  const int s = spec.stride, ph = spec.pad_h, pw = spec.pad_w;

  for (int oc = 0; oc < co; ++oc) {
    T* oplane = op + static_cast<int64_t>(oc) * out_h * out_w;
    for (int ic = 0; ic < ci; ++ic) {
      const T* xplane = xp + static_cast<int64_t>(ic) * in_h * in_w;
      const T* wbase = wp + ((static_cast<int64_t>(ic) * co + oc) * kh) * kw;
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          const T wv = wbase[ky * kw + kx];
          if (wv == T(0)) continue;
          for (int iy = 0; iy < in_h; ++iy) {
            const int oy = iy * s - ph + ky;
            if (oy < 0 || oy >= out_h) continue;
            const T* xrow = xplane + static_cast<int64_t>(iy) * in_w;
            T* orow = oplane + static_cast<int64_t>(oy) * out_w - pw + kx;
            for (int ix = 0; ix < in_w; ++ix) {
              const int ox = ix * s + kx - pw;
              if (ox < 0 || ox >= out_w) continue;
              orow[ix * s] += wv * xrow[ix];
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
TensorT<T> deconv2d(const TensorT<T>& x, const TensorT<T>& w, const ConvSpec& spec,
                    TapeT<T>* tape = nullptr) {
  TensorT<T> out = deconv2d_raw(x, w, spec);
  if (tape) {
    tape->record("deconv2d", [x, w, spec, out](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      // Adjoint of the scatter is a plain strided gather: run the forward
      // convolution pattern with grad_out as input and the same kernel.
      const int ci = spec.in_channels, co = spec.out_channels;
      const int kh = spec.kernel_h, kw = spec.kernel_w;
      const int s = spec.stride, ph = spec.pad_h, pw = spec.pad_w;
      const int in_h = x.height(), in_w = x.width();
      const int out_h = g->height(), out_w = g->width();

      TensorT<T> gin(x.shape());
      TensorT<T> gw(w.shape());
      const T* gp = g->data();
      const T* wp = w.data();
      const T* xp = x.data();
      for (int ic = 0; ic < ci; ++ic) {
        T* iplane = gin.data() + static_cast<int64_t>(ic) * in_h * in_w;
        const T* xplane = xp + static_cast<int64_t>(ic) * in_h * in_w;
        for (int oc = 0; oc < co; ++oc) {
          const T* gplane = gp + static_cast<int64_t>(oc) * out_h * out_w;
          const T* wbase = wp + ((static_cast<int64_t>(ic) * co + oc) * kh) * kw;
          T* gwbase = gw.data() + ((static_cast<int64_t>(ic) * co + oc) * kh) * kw;
          for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
              const T wv = wbase[ky * kw + kx];
              T acc = 0;
              for (int iy = 0; iy < in_h; ++iy) {
                const int oy = iy * s - ph + ky;
                if (oy < 0 || oy >= out_h) continue;
                const T* grow = gplane + static_cast<int64_t>(oy) * out_w;
                T* irow = iplane + static_cast<int64_t>(iy) * in_w;
                const T* xrow = xplane + static_cast<int64_t>(iy) * in_w;
                for (int ix = 0; ix < in_w; ++ix) {
                  const int ox = ix * s - pw + kx;
                  if (ox < 0 || ox >= out_w) continue;
                  irow[ix] += wv * grow[ox];
                  acc += xrow[ix] * grow[ox];
                }
              }
              gwbase[ky * kw + kx] += acc;
            }
          }
        }
      }
      accumulate(t.grad_buffer(x), gin);
      accumulate(t.grad_buffer(w), gw);
    });
  }
  return out;
}

/// Kernel that makes deconv2d an exact bilinear x2 upsampler scaled by
/// `gain`; with gain 2 it doubles flow magnitude alongside the resolution.
template <typename T>
TensorT<T> bilinear_upsample_kernel(int channels, T gain) {
  const T taps[4] = {T(0.25), T(0.75), T(0.75), T(0.25)};
  TensorT<T> w(Shape{channels, channels, 4, 4});
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < 4; ++ky)
      for (int kx = 0; kx < 4; ++kx)
        w.data()[((c * channels + c) * 4 + ky) * 4 + kx] = gain * taps[ky] * taps[kx];
  return w;
}

// ---------------------------------------------------------------------------
// Pointwise and per-column ops

template <typename T>
TensorT<T> leaky_relu(const TensorT<T>& x, T slope, TapeT<T>* tape = nullptr) {
  TensorT<T> out(x.shape());
  const T* xp = x.data();
  T* op = out.data();
  for (int64_t i = 0; i < x.size(); ++i) op[i] = xp[i] >= T(0) ? xp[i] : slope * xp[i];
  if (tape) {
    tape->record("leaky_relu", [x, slope, out](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      TensorT<T>& gin = t.grad_buffer(x);
      const T* xp2 = x.data();
      const T* gp = g->data();
      T* ip = gin.data();
      for (int64_t i = 0; i < x.size(); ++i) ip[i] += gp[i] * (xp2[i] >= T(0) ? T(1) : slope);
    });
  }
  return out;
}

template <typename T>
TensorT<T> negative_square(const TensorT<T>& x, TapeT<T>* tape = nullptr) {
  TensorT<T> out(x.shape());
  const T* xp = x.data();
  T* op = out.data();
  for (int64_t i = 0; i < x.size(); ++i) op[i] = -xp[i] * xp[i];
  if (tape) {
    tape->record("negative_square", [x, out](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      TensorT<T>& gin = t.grad_buffer(x);
      const T* xp2 = x.data();
      const T* gp = g->data();
      T* ip = gin.data();
      for (int64_t i = 0; i < x.size(); ++i) ip[i] += T(-2) * xp2[i] * gp[i];
    });
  }
  return out;
}

/// Normalized exponential over the channel column at each spatial position.
/// Max-subtraction keeps it finite for any input.
template <typename T>
TensorT<T> channel_softmax(const TensorT<T>& x, TapeT<T>* tape = nullptr) {
  if (x.rank() != 3) throw ShapeError("channel_softmax: input must be (C,H,W)");
  const int c = x.channels(), h = x.height(), w = x.width();
  const int64_t plane = static_cast<int64_t>(h) * w;
  TensorT<T> out(x.shape());
  const T* xp = x.data();
  T* op = out.data();
  for (int64_t i = 0; i < plane; ++i) {
    T m = xp[i];
    for (int k = 1; k < c; ++k) m = std::max(m, xp[k * plane + i]);
    T sum = 0;
    for (int k = 0; k < c; ++k) {
      const T e = std::exp(xp[k * plane + i] - m);
      op[k * plane + i] = e;
      sum += e;
    }
    const T inv = T(1) / sum;
    for (int k = 0; k < c; ++k) op[k * plane + i] *= inv;
  }
  if (tape) {
    tape->record("channel_softmax", [x, out, c, plane](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      TensorT<T>& gin = t.grad_buffer(x);
      const T* sp = out.data();
      const T* gp = g->data();
      T* ip = gin.data();
      for (int64_t i = 0; i < plane; ++i) {
        T dot = 0;
        for (int k = 0; k < c; ++k) dot += gp[k * plane + i] * sp[k * plane + i];
        for (int k = 0; k < c; ++k)
          ip[k * plane + i] += sp[k * plane + i] * (gp[k * plane + i] - dot);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Patch folding (im2col over a centered odd window, zero padded)

/// Output channel block c*w^2 + k holds the neighborhood tap k = (dy+h)*w +
/// (dx+h) of input channel c; the column at (x,y) is the folded w x w patch.
template <typename T>
TensorT<T> fold_patches(const TensorT<T>& x, int window, TapeT<T>* tape = nullptr) {
  if (x.rank() != 3) throw ShapeError("fold_patches: input must be (C,H,W)");
  if (window < 1 || window % 2 == 0)
    throw ShapeError("fold_patches: window must be odd, got " + std::to_string(window));
  const int c = x.channels(), h = x.height(), w = x.width();
  const int half = window / 2;
  TensorT<T> out(Shape{c * window * window, h, w});
  const T* xp = x.data();
  T* op = out.data();
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int ch = 0; ch < c; ++ch) {
    const T* xplane = xp + ch * plane;
    for (int dy = -half; dy <= half; ++dy) {
      for (int dx = -half; dx <= half; ++dx) {
        const int k = (dy + half) * window + (dx + half);
        T* oplane = op + (static_cast<int64_t>(ch) * window * window + k) * plane;
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue; // stays zero
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          const T* src = xplane + static_cast<int64_t>(sy) * w + dx;
          T* dst = oplane + static_cast<int64_t>(y) * w;
          for (int xx = x0; xx < x1; ++xx) dst[xx] = src[xx];
        }
      }
    }
  }
  if (tape) {
    tape->record("fold_patches", [x, out, window, c, h, w, half, plane](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      TensorT<T>& gin = t.grad_buffer(x);
      const T* gp = g->data();
      for (int ch = 0; ch < c; ++ch) {
        T* iplane = gin.data() + ch * plane;
        for (int dy = -half; dy <= half; ++dy) {
          for (int dx = -half; dx <= half; ++dx) {
            const int k = (dy + half) * window + (dx + half);
            const T* gplane = gp + (static_cast<int64_t>(ch) * window * window + k) * plane;
            for (int y = 0; y < h; ++y) {
              const int sy = y + dy;
              if (sy < 0 || sy >= h) continue;
              const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
              T* dst = iplane + static_cast<int64_t>(sy) * w + dx;
              const T* src = gplane + static_cast<int64_t>(y) * w;
              for (int xx = x0; xx < x1; ++xx) dst[xx] += src[xx];
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Structural ops

template <typename T>
TensorT<T> concat_channels(const std::vector<TensorT<T>>& parts, TapeT<T>* tape = nullptr) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const int h = parts[0].height(), w = parts[0].width();
  int total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 3 || p.height() != h || p.width() != w)
      throw ShapeError("concat_channels: spatial extents differ: " + shape_str(p.shape()) +
                       " vs (*," + std::to_string(h) + "," + std::to_string(w) + ")");
    total += p.channels();
  }
  TensorT<T> out(Shape{total, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  int64_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data(), p.data() + p.size(), out.data() + off * plane);
    off += p.channels();
  }
  if (tape) {
    tape->record("concat_channels", [parts, out, plane](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      int64_t off2 = 0;
      for (const auto& p : parts) {
        TensorT<T>& gin = t.grad_buffer(p);
        const T* src = g->data() + off2 * plane;
        T* dst = gin.data();
        for (int64_t i = 0; i < p.size(); ++i) dst[i] += src[i];
        off2 += p.channels();
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b, TapeT<T>* tape = nullptr) {
  if (!a.same_shape(b))
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  TensorT<T> out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (tape) {
    tape->record("add", [a, b, out](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      accumulate(t.grad_buffer(a), *g);
      accumulate(t.grad_buffer(b), *g);
    });
  }
  return out;
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b, TapeT<T>* tape = nullptr) {
  if (!a.same_shape(b))
    throw ShapeError("sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  TensorT<T> out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (tape) {
    tape->record("sub", [a, b, out](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      accumulate(t.grad_buffer(a), *g);
      TensorT<T>& gb = t.grad_buffer(b);
      for (int64_t i = 0; i < b.size(); ++i) gb.data()[i] -= g->data()[i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T factor, TapeT<T>* tape = nullptr) {
  TensorT<T> out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = factor * a.data()[i];
  if (tape) {
    tape->record("scale", [a, factor, out](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      TensorT<T>& ga = t.grad_buffer(a);
      for (int64_t i = 0; i < a.size(); ++i) ga.data()[i] += factor * g->data()[i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b, TapeT<T>* tape = nullptr) {
  if (!a.same_shape(b)) throw ShapeError("mul: shape mismatch");
  TensorT<T> out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (tape) {
    tape->record("mul", [a, b, out](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      TensorT<T>& ga = t.grad_buffer(a);
      TensorT<T>& gb = t.grad_buffer(b);
      for (int64_t i = 0; i < a.size(); ++i) {
        ga.data()[i] += g->data()[i] * b.data()[i];
        gb.data()[i] += g->data()[i] * a.data()[i];
      }
    });
  }
  return out;
}

/// Subtracts each channel's spatial mean.
template <typename T>
TensorT<T> remove_channel_mean(const TensorT<T>& x, TapeT<T>* tape = nullptr) {
  if (x.rank() != 3) throw ShapeError("remove_channel_mean: input must be (C,H,W)");
  const int64_t plane = static_cast<int64_t>(x.height()) * x.width();
  TensorT<T> out(x.shape());
  for (int c = 0; c < x.channels(); ++c) {
    const T* xp = x.data() + c * plane;
    T* op = out.data() + c * plane;
    T mean = 0;
    for (int64_t i = 0; i < plane; ++i) mean += xp[i];
    mean /= static_cast<T>(plane);
    for (int64_t i = 0; i < plane; ++i) op[i] = xp[i] - mean;
  }
  if (tape) {
    tape->record("remove_channel_mean", [x, out, plane](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      TensorT<T>& gin = t.grad_buffer(x);
      for (int c = 0; c < x.channels(); ++c) {
        const T* gp = g->data() + c * plane;
        T* ip = gin.data() + c * plane;
        T mean = 0;
        for (int64_t i = 0; i < plane; ++i) mean += gp[i];
        mean /= static_cast<T>(plane);
        for (int64_t i = 0; i < plane; ++i) ip[i] += gp[i] - mean;
      }
    });
  }
  return out;
}

/// Per-position Euclidean norm over channels: (C,H,W) -> (1,H,W).
/// Subgradient 0 where the norm vanishes.
template <typename T>
TensorT<T> channel_l2norm(const TensorT<T>& x, TapeT<T>* tape = nullptr) {
  if (x.rank() != 3) throw ShapeError("channel_l2norm: input must be (C,H,W)");
  const int c = x.channels();
  const int64_t plane = static_cast<int64_t>(x.height()) * x.width();
  TensorT<T> out(Shape{1, x.height(), x.width()});
  const T* xp = x.data();
  T* op = out.data();
  for (int64_t i = 0; i < plane; ++i) {
    T acc = 0;
    for (int k = 0; k < c; ++k) acc += xp[k * plane + i] * xp[k * plane + i];
    op[i] = std::sqrt(acc);
  }
  if (tape) {
    tape->record("channel_l2norm", [x, out, c, plane](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      TensorT<T>& gin = t.grad_buffer(x);
      const T* xp2 = x.data();
      const T* np = out.data();
      const T* gp = g->data();
      T* ip = gin.data();
      for (int64_t i = 0; i < plane; ++i) {
        if (np[i] <= T(0)) continue;
        const T s = gp[i] / np[i];
        for (int k = 0; k < c; ++k) ip[k * plane + i] += s * xp2[k * plane + i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resampling (tape-free; used on constants and final outputs only)

/// 2x2 average pooling; extents must be even.
template <typename T>
TensorT<T> avg_pool2(const TensorT<T>& x) {
  if (x.rank() != 3) throw ShapeError("avg_pool2: input must be (C,H,W)");
  if (x.height() % 2 || x.width() % 2)
    throw ShapeError("avg_pool2: extents must be even, got " + shape_str(x.shape()));
  const int c = x.channels(), h = x.height() / 2, w = x.width() / 2;
  TensorT<T> out(Shape{c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        out.at(ch, y, xx) = T(0.25) * (x.at(ch, 2 * y, 2 * xx) + x.at(ch, 2 * y, 2 * xx + 1) +
                                       x.at(ch, 2 * y + 1, 2 * xx) + x.at(ch, 2 * y + 1, 2 * xx + 1));
  return out;
}

/// Bilinear x2 upsampling with half-pixel alignment.
template <typename T>
TensorT<T> bilinear_upsample2(const TensorT<T>& x) {
  if (x.rank() != 3) throw ShapeError("bilinear_upsample2: input must be (C,H,W)");
  const int c = x.channels(), h = x.height(), w = x.width();
  TensorT<T> out(Shape{c, 2 * h, 2 * w});
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < 2 * h; ++oy) {
      const T fy = (oy + T(0.5)) / 2 - T(0.5);
      int y0 = static_cast<int>(std::floor(fy));
      const T wy1 = fy - y0;
      int y1 = std::min(y0 + 1, h - 1);
      y0 = std::max(y0, 0);
      for (int ox = 0; ox < 2 * w; ++ox) {
        const T fx = (ox + T(0.5)) / 2 - T(0.5);
        int x0 = static_cast<int>(std::floor(fx));
        const T wx1 = fx - x0;
        int x1 = std::min(x0 + 1, w - 1);
        x0 = std::max(x0, 0);
        out.at(ch, oy, ox) = (1 - wy1) * ((1 - wx1) * x.at(ch, y0, x0) + wx1 * x.at(ch, y0, x1)) +
                             wy1 * ((1 - wx1) * x.at(ch, y1, x0) + wx1 * x.at(ch, y1, x1));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and penalties

template <typename T>
TensorT<T> sum_all(const TensorT<T>& x, TapeT<T>* tape = nullptr) {
  T acc = 0;
  for (int64_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  TensorT<T> out = TensorT<T>::scalar_tensor(acc);
  if (tape) {
    tape->record("sum_all", [x, out](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      TensorT<T>& gin = t.grad_buffer(x);
      const T gv = g->data()[0];
      for (int64_t i = 0; i < x.size(); ++i) gin.data()[i] += gv;
    });
  }
  return out;
}

/// sum(x * r) with r held constant; scalarizer for gradient checks.
template <typename T>
TensorT<T> project(const TensorT<T>& x, const TensorT<T>& r, TapeT<T>* tape = nullptr) {
  if (!x.same_shape(r)) throw ShapeError("project: shape mismatch");
  T acc = 0;
  for (int64_t i = 0; i < x.size(); ++i) acc += x.data()[i] * r.data()[i];
  TensorT<T> out = TensorT<T>::scalar_tensor(acc);
  if (tape) {
    tape->record("project", [x, r, out](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      TensorT<T>& gin = t.grad_buffer(x);
      const T gv = g->data()[0];
      for (int64_t i = 0; i < x.size(); ++i) gin.data()[i] += gv * r.data()[i];
    });
  }
  return out;
}

/// Weighted sum of scalar tensors.
template <typename T>
TensorT<T> weighted_sum(const std::vector<TensorT<T>>& xs, const std::vector<T>& ws,
                        TapeT<T>* tape = nullptr) {
  if (xs.size() != ws.size()) throw ShapeError("weighted_sum: size mismatch");
  T acc = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].size() != 1) throw ShapeError("weighted_sum: inputs must be scalars");
    acc += ws[i] * xs[i].data()[0];
  }
  TensorT<T> out = TensorT<T>::scalar_tensor(acc);
  if (tape) {
    tape->record("weighted_sum", [xs, ws, out](TapeT<T>& t) {
      const TensorT<T>* g = t.find_grad(out);
      if (!g) return;
      for (size_t i = 0; i < xs.size(); ++i) t.grad_buffer(xs[i]).data()[0] += ws[i] * g->data()[0];
    });
  }
  return out;
}

enum class PenaltyKind { kSquaredL2, kCharbonnier };

/// Per-pixel penalty of the flow error, summed over all pixels. Squared-L2:
/// |e|^2; generalized Charbonnier: (|e|^2 + eps^2)^q. `gt` is a constant.
template <typename T>
TensorT<T> flow_penalty_sum(const TensorT<T>& est, const TensorT<T>& gt, PenaltyKind kind,
                            T eps, T q, TapeT<T>* tape = nullptr) {
  if (!est.same_shape(gt))
    throw ShapeError("flow_penalty_sum: est " + shape_str(est.shape()) + " vs gt " +
                     shape_str(gt.shape()));
  if (est.rank() != 3 || est.channels() != 2)
    throw ShapeError("flow_penalty_sum: flow must be (2,H,W)");
  const int64_t plane = static_cast<int64_t>(est.height()) * est.width();
  const T* e = est.data();
  const T* g = gt.data();
  T acc = 0;
  for (int64_t i = 0; i < plane; ++i) {
    const T du = e[i] - g[i];
    const T dv = e[plane + i] - g[plane + i];
    const T n2 = du * du + dv * dv;
    acc += kind == PenaltyKind::kSquaredL2 ? n2 : std::pow(n2 + eps * eps, q);
  }
  TensorT<T> out = TensorT<T>::scalar_tensor(acc);
  if (tape) {
    tape->record("flow_penalty_sum", [est, gt, kind, eps, q, out, plane](TapeT<T>& t) {
      const TensorT<T>* go = t.find_grad(out);
      if (!go) return;
      TensorT<T>& gin = t.grad_buffer(est);
      const T gv = go->data()[0];
      const T* e2 = est.data();
      const T* g2 = gt.data();
      T* ip = gin.data();
      for (int64_t i = 0; i < plane; ++i) {
        const T du = e2[i] - g2[i];
        const T dv = e2[plane + i] - g2[plane + i];
        T f;
        if (kind == PenaltyKind::kSquaredL2) {
          f = T(2);
        } else {
          const T n2 = du * du + dv * dv;
          f = T(2) * q * std::pow(n2 + eps * eps, q - T(1));
        }
        ip[i] += gv * f * du;
        ip[plane + i] += gv * f * dv;
      }
    });
  }
  return out;
}

} // namespace pyraflow
