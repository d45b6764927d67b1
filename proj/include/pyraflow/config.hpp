#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pyraflow/ops.hpp"

namespace pyraflow {

/// Static architecture knobs plus loss settings. Pyramid levels are numbered
/// 1 (full resolution) to 6 (coarsest); the decoder runs levels 6 down to 2.
struct ModelConfig {
  static constexpr int kLevels = 6;
  static constexpr int kFinest = 2;

  float width_scale = 1.0f;
  float leaky_slope = 0.1f;
  bool normalize_input = true;
  uint64_t seed = 0x1f0355;

  PenaltyKind loss = PenaltyKind::kSquaredL2;
  float charbonnier_eps = 0.01f;
  float charbonnier_q = 0.2f;
  // Per-level loss weights for levels 6..2.
  std::array<float, 5> level_loss_weights{0.32f, 0.08f, 0.02f, 0.01f, 0.005f};

  int scaled(int base) const;

  /// Encoder output channels at level k (Table-style schedule 32..192,
  /// scaled by width_scale).
  int encoder_channels(int level) const;

  /// Hidden widths of the decoder stacks (128/64/32 scaled).
  int hidden(int base) const { return scaled(base); }

  int match_radius(int level) const { return level >= 4 ? 3 : 6; }
  int match_stride(int level) const { return level >= 4 ? 1 : 2; }

  /// Kernel size of the last layer in each decoder unit: 3 at levels 6-5,
  /// 5 at levels 4-3, 7 at level 2.
  int last_kernel(int level) const;

  /// Window of the local-convolution filters; same schedule as last_kernel.
  int lconv_window(int level) const { return last_kernel(level); }

  float level_weight(int level) const;

  std::string serialize() const;
  static ModelConfig parse_text(const std::string& text);

  /// Applies one key=value pair; false if the key is not a model key.
  bool apply(const std::string& key, const std::string& value);

  bool operator==(const ModelConfig&) const = default;
};

/// Desk-scale training schedule: six stages (coarsest matching+refinement,
/// add coarsest regularization, then one finer level at a time).
struct TrainHyper {
  std::array<int, 6> stage_iters{250, 200, 250, 300, 400, 600};
  std::array<float, 6> stage_lr{4e-4f, 4e-4f, 4e-4f, 3e-4f, 2e-4f, 1.5e-4f};
  /// lr is halved when a stage passes these fractions of its iterations.
  std::vector<float> lr_milestones{0.6f, 0.8f};
  float adam_beta1 = 0.9f;
  float adam_beta2 = 0.999f;
  float adam_eps = 1e-8f;
  uint64_t seed = 7;

  // Synthetic data settings used by the training command.
  int dataset_size = 200;
  int holdout_size = 20;
  int image_size = 64;
  float max_displacement = 4.0f;
  bool piecewise = false;

  std::string serialize() const;
  bool apply(const std::string& key, const std::string& value);

  bool operator==(const TrainHyper&) const = default;
};

/// Parses flat `key = value` text (one pair per line, '#' comments).
std::vector<std::pair<std::string, std::string>> parse_kv(const std::string& text);

/// Exact round-trip formatting for floats (shortest representation).
std::string format_float(float v);
std::string format_double(double v);

} // namespace pyraflow
