#pragma once

#include "pyraflow/encoder.hpp"

namespace pyraflow {

std::vector<LayerDef> refiner_layers(const ModelConfig& cfg, int level);

/// Sub-pixel refinement: warp the second feature map by the matched flow,
/// stack (first features, re-warped second features, flow) and regress a
/// residual that is added to the matched flow.
Tensor refinement_unit(const Tensor& f1, const Tensor& f2, const Tensor& flow_m,
                       const ModelWeights& w, const ModelConfig& cfg, int level,
                       Tape* tape = nullptr, ShapeTrace* trace = nullptr);

} // namespace pyraflow
