#pragma once

#include "pyraflow/train.hpp"

namespace pyraflow {

struct SyntheticSpec {
  int count = 200;
  int size = 64;               // square images, multiple of 32
  float max_displacement = 4.0f;
  uint64_t seed = 7;
  bool piecewise = false;      // mix in two-region piecewise translations
};

/// Smooth band-limited random textures moved by a random global translation
/// (optionally a two-region piecewise translation). The second image is the
/// texture sampled on the grid; the first is the texture sampled at
/// grid + flow, so warping the second image by the ground truth reproduces
/// the first up to bilinear resampling error. Same seed, same bytes.
std::vector<TrainSample> make_synthetic_dataset(const SyntheticSpec& spec);

/// Single sample with a fixed translation; used for held-out checks.
TrainSample make_translation_sample(int size, float tx, float ty, uint64_t seed);

} // namespace pyraflow
