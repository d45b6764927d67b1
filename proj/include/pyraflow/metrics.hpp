#pragma once

#include <optional>

#include "pyraflow/tensor.hpp"

namespace pyraflow {

/// Pixels with mask > 0 count as valid; all pixels when no mask is given.
using ValidMask = std::optional<Tensor>; // (1,H,W)

/// Average end-point error: mean over valid pixels of the Euclidean distance
/// between estimated and ground-truth flow vectors.
float aee(const Tensor& est, const Tensor& gt, const ValidMask& mask = std::nullopt);

/// Percentage of outlier pixels. A pixel is an outlier when its end-point
/// error is >= 3 px and >= 5% of the ground-truth magnitude (ties count as
/// outliers).
float fl_all(const Tensor& est, const Tensor& gt, const ValidMask& mask = std::nullopt);

} // namespace pyraflow
