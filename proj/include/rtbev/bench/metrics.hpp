#pragma once

#include <cmath>
#include <cstddef>

#include "rtbev/bench/scene.hpp"
#include "rtbev/core/errors.hpp"
#include "rtbev/pipeline/softargmax.hpp"

namespace rtbev {

inline constexpr double kErrorThresholdCm = 0.5;

struct Accuracy {
  double abs_err_cm = 0;
  double rmse_cm = 0;
  double frac_gt_half_cm = 0;  // fraction of cells with |error| > 0.5 cm
  std::size_t cells = 0;
};

/// Errors over the cells valid in `pred`.
inline Accuracy compute_metrics(const ElevationMap& pred, const GroundTruth& gt) {
  if (pred.ny != gt.ny || pred.nx != gt.nx)
    throw ShapeError("prediction lattice " + std::to_string(pred.ny) + "x" + std::to_string(pred.nx) +
                     " does not match ground truth " + std::to_string(gt.ny) + "x" + std::to_string(gt.nx));
  const std::size_t n = static_cast<std::size_t>(gt.ny) * static_cast<std::size_t>(gt.nx);
  if (pred.values.size() != n || pred.valid.size() != n || gt.elevation_cm.size() != n)
    throw ShapeError("elevation map storage does not match its lattice");
  Accuracy a;
  double abs_sum = 0, sq_sum = 0;
  std::size_t over = 0;
  for (std::size_t c = 0; c < n; ++c) {
    if (!pred.valid[c]) continue;
    const double e = pred.values[c] - gt.elevation_cm[c];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    if (std::abs(e) > kErrorThresholdCm) ++over;
    ++a.cells;
  }
  if (a.cells == 0) throw EmptyMask("prediction has no valid cells");
  const double m = static_cast<double>(a.cells);
  a.abs_err_cm = abs_sum / m;
  a.rmse_cm = std::sqrt(sq_sum / m);
  a.frac_gt_half_cm = static_cast<double>(over) / m;
  return a;
}

}  // namespace rtbev
