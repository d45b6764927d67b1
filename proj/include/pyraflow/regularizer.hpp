#pragma once

#include "pyraflow/encoder.hpp"
#include "pyraflow/lconv.hpp"

namespace pyraflow {

/// Brightness error ||warp(im2, flow) - im1||_2 per pixel; the proxy for
/// occlusion probability that feeds filter construction.
Tensor occlusion_map(const Tensor& im1, const Tensor& im2, const Tensor& flow,
                     Tape* tape = nullptr);

/// Flow with the per-channel spatial mean removed.
Tensor remove_mean(const Tensor& flow, Tape* tape = nullptr);

std::vector<LayerDef> regularizer_layers(const ModelConfig& cfg, int level);

/// The distance-metric stack: stacks (F1, mean-removed flow, occlusion map)
/// and emits w^2 channels of local flow-variation estimates.
Tensor distance_metric(const Tensor& f1, const Tensor& flow_s, const Tensor& occ,
                       const ModelWeights& w, const ModelConfig& cfg, int level,
                       Tape* tape = nullptr, ShapeTrace* trace = nullptr);

/// Full regularization: adaptive filters from the distance metric, applied to
/// the flow as a feature-driven local convolution.
Tensor regularization_unit(const Tensor& f1, const Tensor& im1_k, const Tensor& im2_k,
                           const Tensor& flow_s, const ModelWeights& w, const ModelConfig& cfg,
                           int level, Tape* tape = nullptr, ShapeTrace* trace = nullptr);

} // namespace pyraflow
