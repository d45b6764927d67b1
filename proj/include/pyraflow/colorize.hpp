#pragma once

#include <optional>

#include "pyraflow/tensor.hpp"

namespace pyraflow {

/// Flow field to RGB: hue encodes direction (atan2(v,u)), saturation encodes
/// magnitude clipped at max_mag (defaults to the field's maximum). Zero flow
/// maps to white.
Tensor colorize(const Tensor& flow, std::optional<float> max_mag = std::nullopt);

} // namespace pyraflow
