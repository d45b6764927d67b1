#include "pyraflow/synthetic.hpp"

#include <cmath>

#include "pyraflow/errors.hpp"

namespace pyraflow {

namespace {

constexpr int kWavesPerChannel = 8;
constexpr float kPi = 3.14159265358979323846f;

struct Wave {
  float fx, fy, phase, amp;
};

struct Texture {
  std::array<std::vector<Wave>, 3> waves;

  float eval(int c, float x, float y) const {
    float v = 0.5f;
    for (const Wave& w : waves[static_cast<size_t>(c)])
      v += w.amp * std::sin(2.0f * kPi * (w.fx * x + w.fy * y) + w.phase);
    return v;
  }
};

Texture make_texture(std::mt19937_64& rng, int size) {
  std::uniform_real_distribution<float> cycles(0.5f, 4.5f);
  std::uniform_real_distribution<float> angle(0.0f, 2.0f * kPi);
  std::uniform_real_distribution<float> phase(0.0f, 2.0f * kPi);
  std::uniform_real_distribution<float> rawamp(0.3f, 1.0f);
  Texture t;
  for (int c = 0; c < 3; ++c) {
    float total = 0.0f;
    for (int i = 0; i < kWavesPerChannel; ++i) {
      const float n = cycles(rng), a = angle(rng);
      Wave w;
      w.fx = n * std::cos(a) / static_cast<float>(size);
      w.fy = n * std::sin(a) / static_cast<float>(size);
      w.phase = phase(rng);
      w.amp = rawamp(rng);
      total += w.amp;
      t.waves[static_cast<size_t>(c)].push_back(w);
    }
    // Keep values inside (0,1): amplitudes sum to 0.42.
    for (Wave& w : t.waves[static_cast<size_t>(c)]) w.amp *= 0.42f / total;
  }
  return t;
}

TrainSample render(const Texture& tex, int size, const Tensor& flow) {
  TrainSample s;
  s.im1 = Tensor(Shape{3, size, size});
  s.im2 = Tensor(Shape{3, size, size});
  s.gt = flow;
  const int64_t plane = static_cast<int64_t>(size) * size;
  const float* u = flow.data();
  const float* v = flow.data() + plane;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const int64_t i = static_cast<int64_t>(y) * size + x;
        s.im2.data()[c * plane + i] =
            tex.eval(c, static_cast<float>(x), static_cast<float>(y));
        s.im1.data()[c * plane + i] =
            tex.eval(c, static_cast<float>(x) + u[i], static_cast<float>(y) + v[i]);
      }
    }
  }
  return s;
}

/// Translation with Euclidean norm at most max_disp.
std::pair<float, float> draw_translation(std::mt19937_64& rng, float max_disp) {
  std::uniform_real_distribution<float> comp(-max_disp, max_disp);
  for (;;) {
    const float tx = comp(rng), ty = comp(rng);
    if (tx * tx + ty * ty <= max_disp * max_disp) return {tx, ty};
  }
}

} // namespace

std::vector<TrainSample> make_synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.size < 32 || spec.size % 32 != 0)
    throw ConfigError("make_synthetic_dataset: size must be a positive multiple of 32");
  if (spec.count < 1) throw ConfigError("make_synthetic_dataset: count must be positive");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  std::vector<TrainSample> out;
  out.reserve(static_cast<size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) {
    const Texture tex = make_texture(rng, spec.size);
    const auto [tx, ty] = draw_translation(rng, spec.max_displacement);
    Tensor flow(Shape{2, spec.size, spec.size});
    const int64_t plane = static_cast<int64_t>(spec.size) * spec.size;
    for (int64_t j = 0; j < plane; ++j) {
      flow.data()[j] = tx;
      flow.data()[plane + j] = ty;
    }
    if (spec.piecewise && unit(rng) < 0.3f) {
      const auto [tx2, ty2] = draw_translation(rng, spec.max_displacement);
      const int split =
          spec.size / 4 + static_cast<int>(unit(rng) * static_cast<float>(spec.size / 2));
      for (int y = 0; y < spec.size; ++y)
        for (int x = split; x < spec.size; ++x) {
          flow.data()[static_cast<int64_t>(y) * spec.size + x] = tx2;
          flow.data()[plane + static_cast<int64_t>(y) * spec.size + x] = ty2;
        }
    }
    out.push_back(render(tex, spec.size, flow));
  }
  return out;
}

TrainSample make_translation_sample(int size, float tx, float ty, uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Texture tex = make_texture(rng, size);
  Tensor flow(Shape{2, size, size});
  const int64_t plane = static_cast<int64_t>(size) * size;
  for (int64_t j = 0; j < plane; ++j) {
    flow.data()[j] = tx;
    flow.data()[plane + j] = ty;
  }
  return render(tex, size, flow);
}

} // namespace pyraflow
