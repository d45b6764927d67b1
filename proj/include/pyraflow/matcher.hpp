#pragma once

#include "pyraflow/costvol.hpp"
#include "pyraflow/encoder.hpp"

namespace pyraflow {

struct MatchOutput {
  Tensor flow;    // flow{k}_M: upsampled prior plus filtered-cost residual
  Tensor flow_up; // upsampled prior (zeros at the coarsest level)
};

MatchConfig match_config(const ModelConfig& cfg, int level);

/// Parameter-bearing layers of the matching unit at `level`. The transposed
/// upsampler exists only below the coarsest level.
std::vector<LayerDef> matcher_layers(const ModelConfig& cfg, int level);

/// Descriptor matching: upsample the prior flow, warp the second feature map
/// by it, correlate into a cost volume, and filter the volume into a residual
/// flow that is summed with the prior.
MatchOutput matching_unit(const Tensor& f1, const Tensor& f2, const Tensor* flow_prev,
                          const ModelWeights& w, const ModelConfig& cfg, int level,
                          Tape* tape = nullptr, ShapeTrace* trace = nullptr);

} // namespace pyraflow
