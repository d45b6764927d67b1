#include "pyraflow/colorize.hpp"

#include <algorithm>
#include <cmath>

#include "pyraflow/errors.hpp"

namespace pyraflow {

namespace {

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
  // h in [0,360), s,v in [0,1]
  const float c = v * s;
  const float hp = h / 60.0f;
  const float x = c * (1.0f - std::fabs(std::fmod(hp, 2.0f) - 1.0f));
  float r1 = 0, g1 = 0, b1 = 0;
  if (hp < 1) {
    r1 = c; g1 = x;
  } else if (hp < 2) {
    r1 = x; g1 = c;
  } else if (hp < 3) {
    g1 = c; b1 = x;
  } else if (hp < 4) {
    g1 = x; b1 = c;
  } else if (hp < 5) {
    r1 = x; b1 = c;
  } else {
    r1 = c; b1 = x;
  }
  const float m = v - c;
  r = r1 + m;
  g = g1 + m;
  b = b1 + m;
}

} // namespace

Tensor colorize(const Tensor& flow, std::optional<float> max_mag) {
  if (flow.rank() != 3 || flow.channels() != 2)
    throw ShapeError("colorize: flow must be (2,H,W), got " + shape_str(flow.shape()));
  const int h = flow.height(), w = flow.width();
  const int64_t plane = static_cast<int64_t>(h) * w;

  float cap;
  if (max_mag) {
    cap = *max_mag;
  } else {
    cap = 0;
    for (int64_t i = 0; i < plane; ++i) {
      const float u = flow.data()[i], v = flow.data()[plane + i];
      cap = std::max(cap, std::sqrt(u * u + v * v));
    }
  }
  if (cap <= 0) cap = 1.0f;

  Tensor out(Shape{3, h, w});
  constexpr float kPi = 3.14159265358979323846f;
  for (int64_t i = 0; i < plane; ++i) {
    const float u = flow.data()[i], v = flow.data()[plane + i];
    const float mag = std::sqrt(u * u + v * v);
    float hue = std::atan2(v, u) * 180.0f / kPi; // [-180, 180]
    if (hue < 0) hue += 360.0f;
    if (hue >= 360.0f) hue = 0.0f;
    const float sat = std::min(1.0f, mag / cap);
    float r, g, b;
    hsv_to_rgb(hue, sat, 1.0f, r, g, b);
    out.data()[i] = r;
    out.data()[plane + i] = g;
    out.data()[2 * plane + i] = b;
  }
  return out;
}

} // namespace pyraflow
