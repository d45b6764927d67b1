#pragma once

#include <string>

#include "pyraflow/tensor.hpp"

namespace pyraflow {

/// Loads a PNG (8-bit gray/RGB/RGBA, non-interlaced) or binary PPM (P6,
/// maxval 255) into a (3,H,W) tensor scaled to [0,1]. Gray is replicated to
/// three channels; alpha is dropped. Anything else is rejected with IoError.
Tensor read_image(const std::string& path);

/// Writes a (3,H,W) tensor in [0,1] as an 8-bit RGB PNG.
void write_image_png(const std::string& path, const Tensor& image);

/// Writes a (3,H,W) tensor in [0,1] as a binary PPM (P6).
void write_image_ppm(const std::string& path, const Tensor& image);

} // namespace pyraflow
