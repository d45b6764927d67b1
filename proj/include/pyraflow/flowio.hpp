#pragma once

#include <string>

#include "pyraflow/weights.hpp"

namespace pyraflow {

// Middlebury-style .flo: float magic 202021.25 ("PIEH"), int32 width/height,
// then row-major interleaved (u,v) float32 pairs; all little-endian.

Tensor read_flo(const std::string& path);          // -> (2,H,W)
void write_flo(const std::string& path, const Tensor& flow);

// Weight file: magic "LFNW", u32 version, u32 entry count, then per entry
// {u32 name length, name bytes, u32 rank, u32 dims[rank], f32 values};
// little-endian throughout. Round trips are bit-exact.

constexpr uint32_t kWeightFileVersion = 1;

ModelWeights read_weights(const std::string& path);
void write_weights(const std::string& path, const ModelWeights& w);

} // namespace pyraflow
