#include "pyraflow/selfcheck.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <random>

#include "pyraflow/costvol.hpp"
#include "pyraflow/lconv.hpp"
#include "pyraflow/ops.hpp"
#include "pyraflow/warp.hpp"

namespace pyraflow {

namespace {

// ---------------------------------------------------------------------------
// Shared helpers

template <typename T>
TensorT<T> rand_tensor(Shape shape, std::mt19937_64& rng, T lo = T(-1), T hi = T(1)) {
  std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
  TensorT<T> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(dist(rng));
  return t;
}

/// Flow values whose fractional part stays in [0.15, 0.85], so a +-1e-3
/// perturbation cannot cross the bilinear kernel's integer breakpoints.
template <typename T>
TensorT<T> rand_flow_off_grid(int h, int w, std::mt19937_64& rng, T span) {
  std::uniform_real_distribution<double> ip(-static_cast<double>(span), static_cast<double>(span));
  std::uniform_real_distribution<double> fp(0.15, 0.85);
  TensorT<T> t(Shape{2, h, w});
  for (int64_t i = 0; i < t.size(); ++i)
    t.data()[i] = static_cast<T>(std::floor(ip(rng)) + fp(rng));
  return t;
}

template <typename T>
double max_abs(const TensorT<T>& t) {
  double m = 0;
  for (int64_t i = 0; i < t.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(t.data()[i])));
  return m;
}

template <typename T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
  double m = 0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
  return m;
}

// ---------------------------------------------------------------------------
// Central-difference gradient harness

template <typename T>
struct GradProblem {
  std::function<TensorT<T>(const std::vector<TensorT<T>>&, TapeT<T>*)> fn;
  std::vector<TensorT<T>> inputs;
  std::vector<size_t> check; // which inputs get finite-difference verification
};

template <typename T>
double grad_relative_error(const GradProblem<T>& prob, bool sabotage) {
  TapeT<T> tape;
  TensorT<T> loss = prob.fn(prob.inputs, &tape);
  tape.backward(loss);

  const T h = T(1e-3);
  double worst = 0;
  bool sabotaged = false;
  for (size_t idx : prob.check) {
    TensorT<T> analytic = tape.grad(prob.inputs[idx]);
    if (sabotage && !sabotaged) {
      analytic.data()[0] += T(1);
      sabotaged = true;
    }
    TensorT<T> x = prob.inputs[idx]; // shares storage; perturbed in place
    TensorT<T> fd(x.shape());
    for (int64_t j = 0; j < x.size(); ++j) {
      const T old = x.data()[j];
      x.data()[j] = old + h;
      const T lp = prob.fn(prob.inputs, nullptr).scalar();
      x.data()[j] = old - h;
      const T lm = prob.fn(prob.inputs, nullptr).scalar();
      x.data()[j] = old;
      fd.data()[j] = (lp - lm) / (T(2) * h);
    }
    const double denom = std::max({max_abs(analytic), max_abs(fd), 1e-6});
    worst = std::max(worst, max_abs_diff(analytic, fd) / denom);
  }
  return worst;
}

struct Suite {
  const CheckOptions& opt;
  std::vector<CheckResult> results;

  bool wanted(const std::string& name) const {
    return opt.only.empty() || name.rfind(opt.only, 0) == 0;
  }

  void add(const std::string& name, double value, double limit, std::string detail = {}) {
    if (!wanted(name)) return;
    results.push_back({name, value <= limit, value, limit, std::move(detail)});
  }

  void add_flag(const std::string& name, bool pass, std::string detail = {}) {
    if (!wanted(name)) return;
    results.push_back({name, pass, pass ? 0.0 : 1.0, 0.0, std::move(detail)});
  }
};

// ---------------------------------------------------------------------------
// Gradient checks (templated so the same code runs the 64-bit verify mode)

template <typename T>
void gradient_checks(Suite& s, const CheckOptions& opt) {
  const double limit = opt.use_double ? 1e-4 : 1e-2;
  auto run = [&](const std::string& name,
                 const std::function<GradProblem<T>(std::mt19937_64&)>& make) {
    if (!s.wanted(name)) return;
    double worst = 0;
    for (int seed = 0; seed < opt.seeds; ++seed) {
      std::mt19937_64 rng(0xabcd00 + static_cast<uint64_t>(seed));
      GradProblem<T> prob = make(rng);
      worst = std::max(worst, grad_relative_error(prob, opt.sabotage == name && seed == 0));
    }
    s.add(name, worst, limit,
          "max relative error vs central differences over " + std::to_string(opt.seeds) +
              " seeds");
  };

  run("grad.conv2d", [](std::mt19937_64& rng) {
    GradProblem<T> p;
    const int stride = (rng() % 2) ? 2 : 1;
    const ConvSpec spec = ConvSpec::same(3, 4, 3, stride);
    p.inputs = {rand_tensor<T>({3, 6, 7}, rng), rand_tensor<T>({4, 3, 3, 3}, rng),
                rand_tensor<T>({4}, rng)};
    TensorT<T> r = rand_tensor<T>({4, spec.out_h(6), spec.out_w(7)}, rng);
    p.check = {0, 1, 2};
    p.fn = [spec, r](const std::vector<TensorT<T>>& in, TapeT<T>* tape) {
      return project(conv2d(in[0], in[1], in[2], spec, tape), r, tape);
    };
    return p;
  });

  run("grad.deconv2d", [](std::mt19937_64& rng) {
    GradProblem<T> p;
    const ConvSpec spec = ConvSpec::upsample2(2);
    p.inputs = {rand_tensor<T>({2, 4, 5}, rng), rand_tensor<T>({2, 2, 4, 4}, rng)};
    TensorT<T> r = rand_tensor<T>({2, 8, 10}, rng);
    p.check = {0, 1};
    p.fn = [spec, r](const std::vector<TensorT<T>>& in, TapeT<T>* tape) {
      return project(deconv2d(in[0], in[1], spec, tape), r, tape);
    };
    return p;
  });

  run("grad.leaky_relu", [](std::mt19937_64& rng) {
    GradProblem<T> p;
    // Values away from the kink at 0 so finite differences stay one-sided.
    p.inputs = {rand_tensor<T>({3, 5, 5}, rng)};
    for (int64_t i = 0; i < p.inputs[0].size(); ++i) {
      T& v = p.inputs[0].data()[i];
      if (std::abs(static_cast<double>(v)) < 0.05) v += v >= T(0) ? T(0.1) : T(-0.1);
    }
    TensorT<T> r = rand_tensor<T>({3, 5, 5}, rng);
    p.check = {0};
    p.fn = [r](const std::vector<TensorT<T>>& in, TapeT<T>* tape) {
      return project(leaky_relu(in[0], T(0.1), tape), r, tape);
    };
    return p;
  });

  run("grad.channel_softmax", [](std::mt19937_64& rng) {
    GradProblem<T> p;
    p.inputs = {rand_tensor<T>({5, 4, 4}, rng, T(-2), T(2))};
    TensorT<T> r = rand_tensor<T>({5, 4, 4}, rng);
    p.check = {0};
    p.fn = [r](const std::vector<TensorT<T>>& in, TapeT<T>* tape) {
      return project(channel_softmax(in[0], tape), r, tape);
    };
    return p;
  });

  run("grad.negative_square", [](std::mt19937_64& rng) {
    GradProblem<T> p;
    p.inputs = {rand_tensor<T>({4, 4, 4}, rng)};
    TensorT<T> r = rand_tensor<T>({4, 4, 4}, rng);
    p.check = {0};
    p.fn = [r](const std::vector<TensorT<T>>& in, TapeT<T>* tape) {
      return project(negative_square(in[0], tape), r, tape);
    };
    return p;
  });

  run("grad.fold_patches", [](std::mt19937_64& rng) {
    GradProblem<T> p;
    p.inputs = {rand_tensor<T>({2, 5, 6}, rng)};
    TensorT<T> r = rand_tensor<T>({2 * 9, 5, 6}, rng);
    p.check = {0};
    p.fn = [r](const std::vector<TensorT<T>>& in, TapeT<T>* tape) {
      return project(fold_patches(in[0], 3, tape), r, tape);
    };
    return p;
  });

  run("grad.f_warp.feature", [](std::mt19937_64& rng) {
    GradProblem<T> p;
    p.inputs = {rand_tensor<T>({3, 6, 6}, rng), rand_flow_off_grid<T>(6, 6, rng, T(2))};
    TensorT<T> r = rand_tensor<T>({3, 6, 6}, rng);
    p.check = {0};
    p.fn = [r](const std::vector<TensorT<T>>& in, TapeT<T>* tape) {
      return project(f_warp(in[0], in[1], tape), r, tape);
    };
    return p;
  });

  run("grad.f_warp.flow", [](std::mt19937_64& rng) {
    GradProblem<T> p;
    p.inputs = {rand_tensor<T>({3, 6, 6}, rng), rand_flow_off_grid<T>(6, 6, rng, T(2))};
    TensorT<T> r = rand_tensor<T>({3, 6, 6}, rng);
    p.check = {1};
    p.fn = [r](const std::vector<TensorT<T>>& in, TapeT<T>* tape) {
      return project(f_warp(in[0], in[1], tape), r, tape);
    };
    return p;
  });

  run("grad.cost_volume.dense", [](std::mt19937_64& rng) {
    GradProblem<T> p;
    p.inputs = {rand_tensor<T>({4, 6, 6}, rng), rand_tensor<T>({4, 6, 6}, rng)};
    const MatchConfig cfg{2, 1};
    TensorT<T> r = rand_tensor<T>({cfg.channels(), 6, 6}, rng);
    p.check = {0, 1};
    p.fn = [cfg, r](const std::vector<TensorT<T>>& in, TapeT<T>* tape) {
      return project(cost_volume(in[0], in[1], cfg, tape), r, tape);
    };
    return p;
  });

  run("grad.cost_volume.sparse", [](std::mt19937_64& rng) {
    GradProblem<T> p;
    p.inputs = {rand_tensor<T>({3, 7, 8}, rng), rand_tensor<T>({3, 7, 8}, rng)};
    const MatchConfig cfg{4, 2};
    TensorT<T> r = rand_tensor<T>({cfg.channels(), 7, 8}, rng);
    p.check = {0, 1};
    p.fn = [cfg, r](const std::vector<TensorT<T>>& in, TapeT<T>* tape) {
      return project(cost_volume(in[0], in[1], cfg, tape), r, tape);
    };
    return p;
  });

  run("grad.f_lconv", [](std::mt19937_64& rng) {
    GradProblem<T> p;
    p.inputs = {rand_tensor<T>({2, 6, 6}, rng), rand_tensor<T>({9, 6, 6}, rng)};
    TensorT<T> r = rand_tensor<T>({2, 6, 6}, rng);
    p.check = {0, 1};
    p.fn = [r](const std::vector<TensorT<T>>& in, TapeT<T>* tape) {
      return project(f_lconv(in[0], in[1], tape), r, tape);
    };
    return p;
  });

  run("grad.remove_mean", [](std::mt19937_64& rng) {
    GradProblem<T> p;
    p.inputs = {rand_tensor<T>({2, 5, 5}, rng)};
    TensorT<T> r = rand_tensor<T>({2, 5, 5}, rng);
    p.check = {0};
    p.fn = [r](const std::vector<TensorT<T>>& in, TapeT<T>* tape) {
      return project(remove_channel_mean(in[0], tape), r, tape);
    };
    return p;
  });

  run("grad.channel_l2norm", [](std::mt19937_64& rng) {
    GradProblem<T> p;
    // Strictly positive values keep the norm well away from zero.
    p.inputs = {rand_tensor<T>({3, 5, 5}, rng, T(0.3), T(1))};
    TensorT<T> r = rand_tensor<T>({1, 5, 5}, rng);
    p.check = {0};
    p.fn = [r](const std::vector<TensorT<T>>& in, TapeT<T>* tape) {
      return project(channel_l2norm(in[0], tape), r, tape);
    };
    return p;
  });

  run("grad.concat", [](std::mt19937_64& rng) {
    GradProblem<T> p;
    p.inputs = {rand_tensor<T>({2, 4, 4}, rng), rand_tensor<T>({3, 4, 4}, rng)};
    TensorT<T> r = rand_tensor<T>({5, 4, 4}, rng);
    p.check = {0, 1};
    p.fn = [r](const std::vector<TensorT<T>>& in, TapeT<T>* tape) {
      return project(concat_channels<T>({in[0], in[1]}, tape), r, tape);
    };
    return p;
  });

  // The whole filter-construction pipeline: convolutions, activations,
  // negative-square, softmax, and the local convolution, differentiated back
  // to all three stacked inputs.
  run("grad.distance_stack", [](std::mt19937_64& rng) {
    GradProblem<T> p;
    const int h = 5, w = 5;
    const std::vector<ConvSpec> specs = {ConvSpec::same(7, 8, 3), ConvSpec::same(8, 6, 3),
                                         ConvSpec::same(6, 9, 3)};
    std::vector<TensorT<T>> ws, bs;
    // Redraw until every rectifier pre-activation clears the kink at 0 by a
    // margin the +-1e-3 probes cannot bridge; central differences are only
    // valid where the composition is differentiable.
    for (;;) {
      p.inputs = {rand_tensor<T>({4, h, w}, rng), rand_flow_off_grid<T>(h, w, rng, T(1)),
                  rand_tensor<T>({1, h, w}, rng, T(0.1), T(1))};
      ws.clear();
      bs.clear();
      for (const auto& sp : specs) {
        ws.push_back(
            rand_tensor<T>({sp.out_channels, sp.in_channels, 3, 3}, rng, T(-0.4), T(0.4)));
        bs.push_back(rand_tensor<T>({sp.out_channels}, rng, T(-0.2), T(0.2)));
      }
      TensorT<T> x = concat_channels<T>(
          {p.inputs[0], remove_channel_mean(p.inputs[1]), p.inputs[2]});
      double margin = 1e30;
      for (size_t i = 0; i + 1 < specs.size(); ++i) {
        x = conv2d(x, ws[i], bs[i], specs[i]);
        for (int64_t j = 0; j < x.size(); ++j)
          margin = std::min(margin, std::abs(static_cast<double>(x.data()[j])));
        x = leaky_relu(x, T(0.1));
      }
      if (margin > 0.02) break;
    }
    TensorT<T> r = rand_tensor<T>({2, h, w}, rng);
    p.check = {0, 1, 2};
    p.fn = [specs, ws, bs, r](const std::vector<TensorT<T>>& in, TapeT<T>* tape) {
      TensorT<T> x = concat_channels<T>({in[0], remove_channel_mean(in[1], tape), in[2]}, tape);
      for (size_t i = 0; i < specs.size(); ++i) {
        x = conv2d(x, ws[i], bs[i], specs[i], tape);
        if (i + 1 < specs.size()) x = leaky_relu(x, T(0.1), tape);
      }
      TensorT<T> filters = channel_softmax(negative_square(x, tape), tape);
      return project(f_lconv(in[1], filters, tape), r, tape);
    };
    return p;
  });

  run("grad.loss.l2", [](std::mt19937_64& rng) {
    GradProblem<T> p;
    TensorT<T> gt = rand_tensor<T>({2, 5, 5}, rng);
    p.inputs = {rand_tensor<T>({2, 5, 5}, rng, T(-2), T(2))};
    p.check = {0};
    p.fn = [gt](const std::vector<TensorT<T>>& in, TapeT<T>* tape) {
      return flow_penalty_sum(in[0], gt, PenaltyKind::kSquaredL2, T(0.01), T(0.2), tape);
    };
    return p;
  });

  run("grad.loss.charbonnier", [](std::mt19937_64& rng) {
    GradProblem<T> p;
    TensorT<T> gt = rand_tensor<T>({2, 5, 5}, rng);
    p.inputs = {add<T>(gt, rand_tensor<T>({2, 5, 5}, rng, T(0.3), T(1)))};
    p.check = {0};
    p.fn = [gt](const std::vector<TensorT<T>>& in, TapeT<T>* tape) {
      return flow_penalty_sum(in[0], gt, PenaltyKind::kCharbonnier, T(0.01), T(0.2), tape);
    };
    return p;
  });
}

// ---------------------------------------------------------------------------
// Naive reference implementations (independent code paths for the oracles)

template <typename T>
TensorT<T> conv_reference(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                          const ConvSpec& spec) {
  TensorT<T> out(Shape{spec.out_channels, spec.out_h(x.height()), spec.out_w(x.width())});
  for (int oc = 0; oc < spec.out_channels; ++oc)
    for (int oy = 0; oy < out.height(); ++oy)
      for (int ox = 0; ox < out.width(); ++ox) {
        T acc = b.data()[oc];
        for (int ic = 0; ic < spec.in_channels; ++ic)
          for (int ky = 0; ky < spec.kernel_h; ++ky)
            for (int kx = 0; kx < spec.kernel_w; ++kx) {
              const int iy = oy * spec.stride - spec.pad_h + ky;
              const int ix = ox * spec.stride - spec.pad_w + kx;
              if (iy < 0 || iy >= x.height() || ix < 0 || ix >= x.width()) continue;
              acc += w.data()[((oc * spec.in_channels + ic) * spec.kernel_h + ky) * spec.kernel_w +
                              kx] *
                     x.at(ic, iy, ix);
            }
        out.at(oc, oy, ox) = acc;
      }
  return out;
}

/// Per-position correlation over the tap grid, evaluated at every position.
template <typename T>
TensorT<T> costvol_reference_full(const TensorT<T>& f1, const TensorT<T>& f2,
                                  const MatchConfig& cfg) {
  const int taps = cfg.taps_per_axis();
  TensorT<T> out(Shape{taps * taps, f1.height(), f1.width()});
  for (int ty = 0; ty < taps; ++ty)
    for (int tx = 0; tx < taps; ++tx)
      for (int y = 0; y < f1.height(); ++y)
        for (int x = 0; x < f1.width(); ++x) {
          const int yy = y - cfg.radius + ty * cfg.stride;
          const int xx = x - cfg.radius + tx * cfg.stride;
          T acc = 0;
          if (yy >= 0 && yy < f1.height() && xx >= 0 && xx < f1.width()) {
            for (int c = 0; c < f1.channels(); ++c) acc += f1.at(c, y, x) * f2.at(c, yy, xx);
            acc /= static_cast<T>(f1.channels());
          }
          out.at(ty * taps + tx, y, x) = acc;
        }
  return out;
}

template <typename T>
TensorT<T> lconv_reference(const TensorT<T>& field, const TensorT<T>& filters, int window) {
  const int half = window / 2;
  TensorT<T> out(field.shape());
  for (int c = 0; c < field.channels(); ++c)
    for (int y = 0; y < field.height(); ++y)
      for (int x = 0; x < field.width(); ++x) {
        T acc = 0;
        for (int dy = -half; dy <= half; ++dy)
          for (int dx = -half; dx <= half; ++dx) {
            const int sy = y + dy, sx = x + dx;
            if (sy < 0 || sy >= field.height() || sx < 0 || sx >= field.width()) continue;
            acc += filters.at((dy + half) * window + (dx + half), y, x) * field.at(c, sy, sx);
          }
        out.at(c, y, x) = acc;
      }
  return out;
}

template <typename T>
TensorT<T> filters_reference(const TensorT<T>& dist) {
  TensorT<T> out(dist.shape());
  for (int y = 0; y < dist.height(); ++y)
    for (int x = 0; x < dist.width(); ++x) {
      T denom = 0;
      for (int k = 0; k < dist.channels(); ++k)
        denom += std::exp(-dist.at(k, y, x) * dist.at(k, y, x));
      for (int k = 0; k < dist.channels(); ++k)
        out.at(k, y, x) = std::exp(-dist.at(k, y, x) * dist.at(k, y, x)) / denom;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Oracle checks

void oracle_checks(Suite& s) {
  std::mt19937_64 rng(0x0c0ffee);

  {
    // conv2d against the direct six-loop sum, stride 1 and 2.
    double worst = 0;
    for (int stride = 1; stride <= 2; ++stride) {
      const ConvSpec spec = ConvSpec::same(3, 4, 3, stride);
      Tensor x = rand_tensor<float>({3, 8, 9}, rng);
      Tensor w = rand_tensor<float>({4, 3, 3, 3}, rng);
      Tensor b = rand_tensor<float>({4}, rng);
      worst = std::max(worst, max_abs_diff(conv2d(x, w, b, spec), conv_reference(x, w, b, spec)));
    }
    s.add("oracle.conv_vs_loop", worst, 1e-5);
  }

  {
    Tensor a = rand_tensor<float>({64}, rng);
    Tensor b = rand_tensor<float>({64}, rng);
    float ref = 0;
    for (int i = 0; i < 64; ++i) ref += a.data()[i] * b.data()[i];
    ref /= 64.0f;
    s.add("oracle.corr_vs_loop", std::abs(static_cast<double>(correlate(a, b) - ref)), 1e-6);
  }

  {
    // Sparse stride-2 volume: exact at sampled positions, bilinear between.
    const MatchConfig cfg{6, 2};
    Tensor f1 = rand_tensor<float>({4, 10, 11}, rng);
    Tensor f2 = rand_tensor<float>({4, 10, 11}, rng);
    Tensor sparse = cost_volume(f1, f2, cfg);
    Tensor full = costvol_reference_full(f1, f2, cfg);
    const int hs = (10 + 1) / 2, ws = (11 + 1) / 2;
    double worst = 0;
    for (int d = 0; d < cfg.channels(); ++d)
      for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 11; ++x) {
          float expected;
          if (y % 2 == 0 && x % 2 == 0) {
            expected = full.at(d, y, x);
          } else {
            // Bilinear between the four sampled neighbors, clamped at edges.
            auto axis = [](int v, int n, int& lo, int& hi, float& t) {
              lo = v / 2;
              hi = lo + 1;
              t = static_cast<float>(v) / 2.0f - static_cast<float>(lo);
              if (hi > n - 1) { hi = n - 1; lo = n - 1; t = 0; }
            };
            int j0, j1, i0, i1;
            float ty, tx;
            axis(y, hs, j0, j1, ty);
            axis(x, ws, i0, i1, tx);
            auto sample = [&](int j, int i) { return full.at(d, 2 * j, 2 * i); };
            expected = (1 - ty) * ((1 - tx) * sample(j0, i0) + tx * sample(j0, i1)) +
                       ty * ((1 - tx) * sample(j1, i0) + tx * sample(j1, i1));
          }
          worst = std::max(worst,
                           std::abs(static_cast<double>(sparse.at(d, y, x)) - expected));
        }
    s.add("oracle.costvol.sparse_vs_dense", worst, 1e-6);
  }

  {
    const MatchConfig cfg{3, 1};
    Tensor f1 = rand_tensor<float>({4, 9, 9}, rng);
    Tensor f2 = rand_tensor<float>({4, 9, 9}, rng);
    s.add("oracle.costvol.dense_vs_loop",
          max_abs_diff(cost_volume(f1, f2, cfg), costvol_reference_full(f1, f2, cfg)), 1e-6);
  }

  {
    double worst = 0;
    for (int window : {3, 5}) {
      Tensor field = rand_tensor<float>({2, 9, 8}, rng);
      Tensor raw = rand_tensor<float>({window * window, 9, 8}, rng);
      Tensor filters = channel_softmax(raw);
      worst = std::max(worst,
                       max_abs_diff(f_lconv(field, filters), lconv_reference(field, filters,
                                                                             window)));
    }
    s.add("oracle.lconv_fold_vs_loop", worst, 1e-5);
  }

  {
    Tensor dist = rand_tensor<float>({9, 7, 7}, rng, -2.0f, 2.0f);
    s.add("oracle.filters_vs_formula", max_abs_diff(build_filters(dist), filters_reference(dist)),
          1e-6);
  }

  {
    // fold_patches column at an interior position is a literal neighborhood
    // readout.
    Tensor x = rand_tensor<float>({1, 5, 5}, rng);
    Tensor folded = fold_patches(x, 3);
    double worst = 0;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int k = (dy + 1) * 3 + (dx + 1);
        worst = std::max(worst, std::abs(static_cast<double>(folded.at(k, 2, 2)) -
                                         static_cast<double>(x.at(0, 2 + dy, 2 + dx))));
      }
    s.add("oracle.fold_index", worst, 0.0);
  }

  {
    // deconv with a conv's kernel (the 4x4/stride-2/pad-1 pattern) equals
    // that conv's input gradient.
    ConvSpec spec;
    spec.kernel_h = spec.kernel_w = 4;
    spec.stride = 2;
    spec.pad_h = spec.pad_w = 1;
    spec.in_channels = 3;
    spec.out_channels = 2;
    Tensor w = rand_tensor<float>({2, 3, 4, 4}, rng);
    Tensor gout = rand_tensor<float>({2, 5, 6}, rng);
    Tensor via_backward = conv2d_backward_input(gout, w, spec, 10, 12);
    ConvSpec up = spec;
    up.in_channels = 2;
    up.out_channels = 3;
    Tensor via_deconv = deconv2d_raw(gout, w, up);
    s.add("oracle.deconv_adjoint_exact", max_abs_diff(via_backward, via_deconv), 0.0);
  }

  {
    // <conv(x), y> == <x, conv_backward_input(y)>
    const ConvSpec spec = ConvSpec::same(3, 4, 3, 2);
    Tensor x = rand_tensor<float>({3, 8, 8}, rng);
    Tensor w = rand_tensor<float>({4, 3, 3, 3}, rng);
    Tensor zero_bias(Shape{4});
    Tensor y = rand_tensor<float>({4, 4, 4}, rng);
    Tensor cx = conv2d(x, w, zero_bias, spec);
    double lhs = 0, rhs = 0;
    for (int64_t i = 0; i < cx.size(); ++i) lhs += static_cast<double>(cx.data()[i]) * y.data()[i];
    Tensor xadj = conv2d_backward_input(y, w, spec, 8, 8);
    for (int64_t i = 0; i < x.size(); ++i) rhs += static_cast<double>(x.data()[i]) * xadj.data()[i];
    s.add("oracle.conv_adjoint_identity", std::abs(lhs - rhs), 1e-4);
  }
}

// ---------------------------------------------------------------------------
// Invariant checks

void invariant_checks(Suite& s) {
  std::mt19937_64 rng(0x5eed5);

  {
    Tensor f = rand_tensor<float>({4, 7, 7}, rng);
    Tensor zero_flow(Shape{2, 7, 7});
    Tensor warped = f_warp(f, zero_flow);
    s.add_flag("inv.warp_identity",
               std::memcmp(f.data(), warped.data(), sizeof(float) * static_cast<size_t>(f.size())) ==
                   0,
               "zero-flow warp must be bit-identical");
  }

  {
    Tensor f = rand_tensor<float>({2, 8, 8}, rng);
    Tensor flow = Tensor::full({2, 8, 8}, 0.0f);
    for (int64_t i = 0; i < 64; ++i) flow.data()[i] = 2.0f; // u = 2, v = 0
    Tensor warped = f_warp(f, flow);
    double worst = 0;
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 6; ++x)
          worst = std::max(worst, std::abs(static_cast<double>(warped.at(c, y, x)) -
                                           static_cast<double>(f.at(c, y, x + 2))));
    s.add("inv.warp_integer_shift", worst, 0.0);
  }

  {
    Tensor f1 = rand_tensor<float>({3, 6, 6}, rng);
    Tensor f2 = rand_tensor<float>({3, 6, 6}, rng);
    Tensor flow = rand_flow_off_grid<float>(6, 6, rng, 1.5f);
    Tensor combo(Shape{3, 6, 6});
    for (int64_t i = 0; i < combo.size(); ++i)
      combo.data()[i] = 0.7f * f1.data()[i] - 1.3f * f2.data()[i];
    Tensor lhs = f_warp(combo, flow);
    Tensor w1 = f_warp(f1, flow);
    Tensor w2 = f_warp(f2, flow);
    double worst = 0;
    for (int64_t i = 0; i < lhs.size(); ++i)
      worst = std::max(worst, std::abs(static_cast<double>(lhs.data()[i]) -
                                       (0.7 * w1.data()[i] - 1.3 * w2.data()[i])));
    s.add("inv.warp_linearity", worst, 1e-6);
  }

  {
    Tensor x = rand_tensor<float>({9, 6, 6}, rng, -30.0f, 30.0f);
    Tensor sm = channel_softmax(x);
    double worst = 0;
    for (int y = 0; y < 6; ++y)
      for (int xx = 0; xx < 6; ++xx) {
        double sum = 0;
        for (int c = 0; c < 9; ++c) sum += sm.at(c, y, xx);
        worst = std::max(worst, std::abs(sum - 1.0));
      }
    s.add("inv.softmax_columns", worst, 1e-6);
  }

  {
    Tensor dist = rand_tensor<float>({25, 5, 5}, rng, -3.0f, 3.0f);
    Tensor filters = build_filters(dist);
    double worst = 0;
    bool in_range = true;
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x) {
        double sum = 0;
        for (int c = 0; c < 25; ++c) {
          const float v = filters.at(c, y, x);
          in_range = in_range && v > 0.0f && v <= 1.0f;
          sum += v;
        }
        worst = std::max(worst, std::abs(sum - 1.0));
      }
    s.add("inv.filterbank_columns", worst, 1e-5);
    s.add_flag("inv.filterbank_range", in_range, "every tap weight in (0,1]");
  }

  {
    // Convexity: each output lies in the [min,max] of the values its filter
    // column saw; clipped windows see zero-padding, so 0 joins the hull.
    Tensor field = rand_tensor<float>({2, 7, 7}, rng, -3.0f, 3.0f);
    Tensor filters = build_filters(rand_tensor<float>({9, 7, 7}, rng, -2.0f, 2.0f));
    Tensor out = f_lconv(field, filters);
    double worst = 0;
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 7; ++x) {
          float lo = 1e30f, hi = -1e30f;
          bool clipped = false;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int sy = y + dy, sx = x + dx;
              if (sy < 0 || sy >= 7 || sx < 0 || sx >= 7) {
                clipped = true;
                continue;
              }
              lo = std::min(lo, field.at(c, sy, sx));
              hi = std::max(hi, field.at(c, sy, sx));
            }
          if (clipped) {
            lo = std::min(lo, 0.0f);
            hi = std::max(hi, 0.0f);
          }
          const float v = out.at(c, y, x);
          worst = std::max({worst, static_cast<double>(lo - v), static_cast<double>(v - hi)});
        }
    s.add("inv.lconv_convexity", worst, 1e-6);
  }

  {
    // conv(a*x + b*y) == a*conv(x) + b*conv(y) with zero bias.
    const ConvSpec spec = ConvSpec::same(3, 4, 3);
    Tensor w = rand_tensor<float>({4, 3, 3, 3}, rng);
    Tensor zero_bias(Shape{4});
    Tensor x = rand_tensor<float>({3, 6, 6}, rng);
    Tensor y = rand_tensor<float>({3, 6, 6}, rng);
    Tensor combo(Shape{3, 6, 6});
    for (int64_t i = 0; i < combo.size(); ++i)
      combo.data()[i] = 1.5f * x.data()[i] - 0.5f * y.data()[i];
    Tensor lhs = conv2d(combo, w, zero_bias, spec);
    Tensor cx = conv2d(x, w, zero_bias, spec);
    Tensor cy = conv2d(y, w, zero_bias, spec);
    double worst = 0;
    for (int64_t i = 0; i < lhs.size(); ++i)
      worst = std::max(worst, std::abs(static_cast<double>(lhs.data()[i]) -
                                       (1.5 * cx.data()[i] - 0.5 * cy.data()[i])));
    s.add("inv.conv_linearity", worst, 1e-5);
  }

  {
    const ConvSpec spec = ConvSpec::same(3, 4, 3);
    Tensor x = rand_tensor<float>({3, 6, 6}, rng);
    Tensor w = rand_tensor<float>({4, 3, 3, 3}, rng);
    Tensor b = rand_tensor<float>({4}, rng);
    Tensor o1 = conv2d(x, w, b, spec);
    Tensor o2 = conv2d(x, w, b, spec);
    s.add_flag("inv.purity",
               std::memcmp(o1.data(), o2.data(),
                           sizeof(float) * static_cast<size_t>(o1.size())) == 0,
               "same inputs give bit-identical outputs");
  }

  {
    // Swapping the feature maps and negating the displacement transposes the
    // volume wherever both entries are in range.
    const MatchConfig cfg{2, 1};
    Tensor f1 = rand_tensor<float>({3, 6, 6}, rng);
    Tensor f2 = rand_tensor<float>({3, 6, 6}, rng);
    Tensor v12 = cost_volume(f1, f2, cfg);
    Tensor v21 = cost_volume(f2, f1, cfg);
    const int taps = cfg.taps_per_axis();
    double worst = 0;
    for (int ty = 0; ty < taps; ++ty)
      for (int tx = 0; tx < taps; ++tx)
        for (int y = 0; y < 6; ++y)
          for (int x = 0; x < 6; ++x) {
            const int dy = ty - cfg.radius, dx = tx - cfg.radius;
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= 6 || xx < 0 || xx >= 6) continue;
            const int tyn = -dy + cfg.radius, txn = -dx + cfg.radius;
            worst = std::max(worst,
                             std::abs(static_cast<double>(v12.at(ty * taps + tx, y, x)) -
                                      static_cast<double>(v21.at(tyn * taps + txn, yy, xx))));
          }
    s.add("inv.costvol_symmetry", worst, 1e-6);
  }
}

} // namespace

std::vector<CheckResult> run_gradient_checks(const CheckOptions& opt) {
  Suite s{opt, {}};
  if (opt.use_double)
    gradient_checks<double>(s, opt);
  else
    gradient_checks<float>(s, opt);
  return std::move(s.results);
}

std::vector<CheckResult> run_oracle_checks(const CheckOptions& opt) {
  Suite s{opt, {}};
  oracle_checks(s);
  return std::move(s.results);
}

std::vector<CheckResult> run_invariant_checks(const CheckOptions& opt) {
  Suite s{opt, {}};
  invariant_checks(s);
  return std::move(s.results);
}

std::vector<CheckResult> run_all_checks(const CheckOptions& opt) {
  std::vector<CheckResult> all = run_gradient_checks(opt);
  for (auto& r : run_oracle_checks(opt)) all.push_back(std::move(r));
  for (auto& r : run_invariant_checks(opt)) all.push_back(std::move(r));
  return all;
}

} // namespace pyraflow
