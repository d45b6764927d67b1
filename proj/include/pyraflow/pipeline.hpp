#pragma once

#include <optional>

#include "pyraflow/matcher.hpp"
#include "pyraflow/refiner.hpp"
#include "pyraflow/regularizer.hpp"

namespace pyraflow {

/// Which part of the cascade is assembled. The full model is levels 6..2
/// with regularization everywhere; the stage-wise schedule starts from the
/// coarsest level without its regularizer.
struct CascadePlan {
  int finest_level = ModelConfig::kFinest;
  bool regularize_coarsest = true;

  bool has_regularizer(int level) const {
    return level != ModelConfig::kLevels || regularize_coarsest;
  }
  static CascadePlan full() { return {}; }
};

struct LevelFlows {
  Tensor m; // after descriptor matching
  Tensor s; // after sub-pixel refinement
  Tensor r; // after regularization; undefined when the plan skips it
};

struct ForwardResult {
  Tensor flow;                        // full-resolution (2,H,W)
  std::array<LevelFlows, 7> levels;   // indexed by level number, 2..6 used
  int finest_level = ModelConfig::kFinest;

  const LevelFlows& level(int k) const { return levels[static_cast<size_t>(k)]; }
  /// Last flow produced at level k under the plan.
  const Tensor& level_output(int k) const {
    const LevelFlows& lf = level(k);
    return lf.r.defined() ? lf.r : lf.s;
  }
};

/// All parameter-bearing layers of the assembled cascade, in serialization
/// order: encoder first, then levels 6 down to `plan.finest_level` with each
/// level's matching, refinement, and (where planned) regularization layers.
std::vector<LayerDef> model_layers(const ModelConfig& cfg, const CascadePlan& plan);

/// Fresh seeded initialization of every layer in the plan.
ModelWeights init_weights(const ModelConfig& cfg, std::mt19937_64& rng,
                          const CascadePlan& plan = CascadePlan::full());

/// Adds the layers `to` requires on top of `from`, warm-starting each new
/// level's layers from the level above where shapes match.
void grow_weights(ModelWeights& w, const ModelConfig& cfg, const CascadePlan& from,
                  const CascadePlan& to, std::mt19937_64& rng);

/// Checks that `w` holds exactly the parameters the plan expects, with the
/// expected shapes. Throws naming the first offending parameter.
void validate_weights(const ModelWeights& w, const ModelConfig& cfg,
                      const CascadePlan& plan = CascadePlan::full());

/// Doubles spatial extents and magnitude; tape-free (final output only).
Tensor upsample_flow2(const Tensor& flow);

/// Coarse-to-fine estimation over the assembled cascade. Returns the flow at
/// full resolution (level-finest output upsampled) plus every intermediate
/// per-level flow for loss and diagnostics.
ForwardResult forward(const Tensor& im1, const Tensor& im2, const ModelWeights& w,
                      const ModelConfig& cfg, const CascadePlan& plan = CascadePlan::full(),
                      Tape* tape = nullptr, ShapeTrace* trace = nullptr);

/// Ground truth average-pooled to level k with magnitude halved per level.
Tensor downsample_gt_flow(const Tensor& gt_full, int level);

/// Per-level, per-stage penalty sum weighted by the level weights.
Tensor multi_level_loss(const ForwardResult& result, const Tensor& gt_full,
                        const ModelConfig& cfg, Tape* tape = nullptr);

struct ParameterBreakdown {
  int64_t encoder = 0;
  int64_t matching = 0;
  int64_t refinement = 0;
  int64_t regularization = 0;
  int64_t total = 0;
};
ParameterBreakdown parameter_breakdown(const ModelWeights& w);

} // namespace pyraflow
