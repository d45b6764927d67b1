#include "pyraflow/metrics.hpp"

#include <cmath>

#include "pyraflow/errors.hpp"

namespace pyraflow {

namespace {

void check_pair(const Tensor& est, const Tensor& gt, const ValidMask& mask, const char* what) {
  if (est.rank() != 3 || est.channels() != 2 || gt.rank() != 3 || gt.channels() != 2)
    throw ShapeError(std::string(what) + ": flows must be (2,H,W)");
  if (!est.same_shape(gt))
    throw ShapeError(std::string(what) + ": extents differ: " + shape_str(est.shape()) + " vs " +
                     shape_str(gt.shape()));
  if (mask && (mask->height() != est.height() || mask->width() != est.width()))
    throw ShapeError(std::string(what) + ": mask extents differ from flow");
}

} // namespace

float aee(const Tensor& est, const Tensor& gt, const ValidMask& mask) {
  check_pair(est, gt, mask, "aee");
  const int64_t plane = static_cast<int64_t>(est.height()) * est.width();
  double total = 0;
  int64_t valid = 0;
  for (int64_t i = 0; i < plane; ++i) {
    if (mask && mask->data()[i] <= 0) continue;
    const double du = est.data()[i] - gt.data()[i];
    const double dv = est.data()[plane + i] - gt.data()[plane + i];
    total += std::sqrt(du * du + dv * dv);
    ++valid;
  }
  if (valid == 0) throw ShapeError("aee: empty validity mask");
  return static_cast<float>(total / static_cast<double>(valid));
}

float fl_all(const Tensor& est, const Tensor& gt, const ValidMask& mask) {
  check_pair(est, gt, mask, "fl_all");
  const int64_t plane = static_cast<int64_t>(est.height()) * est.width();
  int64_t outliers = 0, valid = 0;
  for (int64_t i = 0; i < plane; ++i) {
    if (mask && mask->data()[i] <= 0) continue;
    const double du = est.data()[i] - gt.data()[i];
    const double dv = est.data()[plane + i] - gt.data()[plane + i];
    const double epe = std::sqrt(du * du + dv * dv);
    const double gu = gt.data()[i], gv = gt.data()[plane + i];
    const double mag = std::sqrt(gu * gu + gv * gv);
    if (epe >= 3.0 && epe >= 0.05 * mag) ++outliers;
    ++valid;
  }
  if (valid == 0) throw ShapeError("fl_all: empty validity mask");
  return static_cast<float>(100.0 * static_cast<double>(outliers) / static_cast<double>(valid));
}

} // namespace pyraflow
