#include "pyraflow/encoder.hpp"

#include "pyraflow/errors.hpp"
#include "pyraflow/ops.hpp"

namespace pyraflow {

std::vector<LayerDef> encoder_layers(const ModelConfig& cfg) {
  const int c1 = cfg.encoder_channels(1), c2 = cfg.encoder_channels(2);
  const int c3 = cfg.encoder_channels(3), c4 = cfg.encoder_channels(4);
  const int c5 = cfg.encoder_channels(5), c6 = cfg.encoder_channels(6);
  return {
      {"conv1", ConvSpec::same(3, c1, 7, 1)},
      {"conv2_1", ConvSpec::same(c1, c2, 3, 2)},
      {"conv2_2", ConvSpec::same(c2, c2, 3, 1)},
      {"conv2_3", ConvSpec::same(c2, c2, 3, 1)},
      {"conv3_1", ConvSpec::same(c2, c3, 3, 2)},
      {"conv3_2", ConvSpec::same(c3, c3, 3, 1)},
      {"conv4_1", ConvSpec::same(c3, c4, 3, 2)},
      {"conv4_2", ConvSpec::same(c4, c4, 3, 1)},
      {"conv5", ConvSpec::same(c4, c5, 3, 2)},
      {"conv6", ConvSpec::same(c5, c6, 3, 2)},
  };
}

FeaturePyramid build_pyramid(const Tensor& image, const ModelWeights& w, const ModelConfig& cfg,
                             Tape* tape, ShapeTrace* trace) {
  if (image.rank() != 3 || image.channels() != 3)
    throw ShapeError("build_pyramid: image must be (3,H,W), got " + shape_str(image.shape()));
  if (image.height() % 32 != 0 || image.width() % 32 != 0)
    throw ShapeError("build_pyramid: extents " + std::to_string(image.height()) + "x" +
                     std::to_string(image.width()) +
                     " are not divisible by 32; pad the image first (the CLI --pad flag does "
                     "this automatically)");

  // The last layer producing each pyramid level.
  static const char* kLevelOutput[6] = {"conv1", "conv2_3", "conv3_2", "conv4_2", "conv5", "conv6"};

  // Standardize each channel (zero mean, unit variance) so feature and
  // cost-volume magnitudes are O(1) regardless of image contrast. Input
  // preprocessing only; the raw image feeds the brightness-error path.
  Tensor x = image;
  if (cfg.normalize_input) {
    x = Tensor(image.shape());
    const int64_t plane = static_cast<int64_t>(image.height()) * image.width();
    for (int c = 0; c < 3; ++c) {
      const float* src = image.data() + c * plane;
      float* dst = x.data() + c * plane;
      double mean = 0;
      for (int64_t i = 0; i < plane; ++i) mean += src[i];
      mean /= static_cast<double>(plane);
      double var = 0;
      for (int64_t i = 0; i < plane; ++i) var += (src[i] - mean) * (src[i] - mean);
      var /= static_cast<double>(plane);
      const float inv = 1.0f / static_cast<float>(std::sqrt(var) + 1e-6);
      for (int64_t i = 0; i < plane; ++i)
        dst[i] = (src[i] - static_cast<float>(mean)) * inv;
    }
  }
  FeaturePyramid pyr;
  int next_level = 0;
  for (const LayerDef& def : encoder_layers(cfg)) {
    x = conv2d(x, w.at(def.name + ".weight"), w.at(def.name + ".bias"), def.spec, tape);
    x = leaky_relu(x, cfg.leaky_slope, tape);
    trace_shape(trace, def.name, x);
    if (next_level < 6 && def.name == kLevelOutput[next_level]) {
      pyr.levels[static_cast<size_t>(next_level)] = x;
      ++next_level;
    }
  }
  return pyr;
}

Tensor downsample_image(const Tensor& image, int level) {
  if (level < 1 || level > ModelConfig::kLevels)
    throw ShapeError("downsample_image: level " + std::to_string(level) + " out of range");
  Tensor out = image;
  for (int i = 1; i < level; ++i) out = avg_pool2(out);
  return out;
}

} // namespace pyraflow
