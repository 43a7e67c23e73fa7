#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "rtbev/core/errors.hpp"
#include "rtbev/core/tensor.hpp"

namespace rtbev {

/// Per-cell elevation in centimetres, row-major [ny, nx].
struct ElevationMap {
  int ny = 0, nx = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;
  double bin_min_cm = 0.0, bin_max_cm = 0.0;

  double at(int j, int i) const { return values[static_cast<std::size_t>(j) * nx + i]; }
  bool is_valid(int j, int i) const { return valid[static_cast<std::size_t>(j) * nx + i] != 0; }
  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
  }
};

/// Expected bin centre under softmax(scores) along the bin axis, computed in
/// one pass per cell with a running maximum, numerator and normaliser.
/// Accepts [ne, ny, nx] or [1, 1, ne, ny, nx]; bins in metres, result in cm.
inline ElevationMap fused_softargmax(const Tensor& scores, const std::vector<double>& bins) {
  Shape s = scores.shape();
  if (s.size() == 5 && s[0] == 1 && s[1] == 1) s = {s[2], s[3], s[4]};
  if (s.size() != 3) throw ShapeError("score volume must be [ne, ny, nx], got " + shape_string(scores.shape()));
  const std::size_t ne = s[0], ny = s[1], nx = s[2];
  if (bins.size() != ne)
    throw ShapeError("score volume has " + std::to_string(ne) + " bins but " + std::to_string(bins.size()) +
                     " centres were given");
  ElevationMap map;
  map.ny = static_cast<int>(ny);
  map.nx = static_cast<int>(nx);
  map.values.assign(ny * nx, 0.0);
  map.valid.assign(ny * nx, 1);
  map.bin_min_cm = bins.front() * 100.0;
  map.bin_max_cm = bins.back() * 100.0;
  const auto d = scores.data();
  const std::size_t plane = ny * nx;
  for (std::size_t cell = 0; cell < plane; ++cell) {
    double m = -std::numeric_limits<double>::infinity(), num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < ne; ++k) {
      const double v = d[k * plane + cell];
      if (v > m) {
        const double r = std::exp(m - v);
        num = num * r + bins[k];
        den = den * r + 1.0;
        m = v;
      } else {
        const double e = std::exp(v - m);
        num += e * bins[k];
        den += e;
      }
    }
    map.values[cell] = std::clamp(num / den * 100.0, map.bin_min_cm, map.bin_max_cm);
  }
  return map;
}

}  // namespace rtbev
