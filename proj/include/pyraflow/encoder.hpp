#pragma once

#include <array>

#include "pyraflow/config.hpp"
#include "pyraflow/weights.hpp"

namespace pyraflow {

/// Shapes recorded during a forward walk: (layer name, tensor shape).
using ShapeTrace = std::vector<std::pair<std::string, Shape>>;

inline void trace_shape(ShapeTrace* trace, const std::string& name, const Tensor& t) {
  if (trace) trace->emplace_back(name, t.shape());
}

/// Six feature tensors per image, level 1 (full resolution) to 6 (coarsest).
struct FeaturePyramid {
  std::array<Tensor, 6> levels;
  const Tensor& level(int k) const { return levels[static_cast<size_t>(k - 1)]; }
  Tensor& level(int k) { return levels[static_cast<size_t>(k - 1)]; }
};

/// The ten convolution layers of the shared-weight feature extractor.
std::vector<LayerDef> encoder_layers(const ModelConfig& cfg);

/// Runs the extractor over one image. Both images of a pair use the same
/// weights object; identical inputs therefore give identical pyramids.
/// Extents must be divisible by 32 so that level 6 exists.
FeaturePyramid build_pyramid(const Tensor& image, const ModelWeights& w, const ModelConfig& cfg,
                             Tape* tape = nullptr, ShapeTrace* trace = nullptr);

/// Image at level-k resolution via repeated 2x average pooling (identity at
/// k = 1).
Tensor downsample_image(const Tensor& image, int level);

} // namespace pyraflow
