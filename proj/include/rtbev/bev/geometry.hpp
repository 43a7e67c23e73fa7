#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rtbev/core/errors.hpp"
#include "rtbev/core/ops.hpp"
#include "rtbev/core/tensor.hpp"

namespace rtbev {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;  // row-major

inline constexpr double kDepthEpsilon = 1e-6;  // metres

struct CameraIntrinsics {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 1, height = 1;

  void check() const {
    if (!(fx > 0 && fy > 0)) throw ConfigError("camera focal lengths must be positive");
    if (width <= 0 || height <= 0) throw ConfigError("camera image size must be positive");
  }
  bool operator==(const CameraIntrinsics&) const = default;
};

/// p_cam = R * p_road + t.
struct RigidTransform {
  Mat3 R{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 t{0, 0, 0};

  Vec3 apply(const Vec3& p) const {
    return {R[0] * p[0] + R[1] * p[1] + R[2] * p[2] + t[0], R[3] * p[0] + R[4] * p[1] + R[5] * p[2] + t[1],
            R[6] * p[0] + R[7] * p[1] + R[8] * p[2] + t[2]};
  }
  Vec3 inverse_apply(const Vec3& q) const {
    const Vec3 d{q[0] - t[0], q[1] - t[1], q[2] - t[2]};
    return {R[0] * d[0] + R[3] * d[1] + R[6] * d[2], R[1] * d[0] + R[4] * d[1] + R[7] * d[2],
            R[2] * d[0] + R[5] * d[1] + R[8] * d[2]};
  }
  /// Throws ConfigError unless R is a proper rotation (RtR = I, det = +1, 1e-9).
  void check() const {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double dot = 0;
        for (int k = 0; k < 3; ++k) dot += R[k * 3 + i] * R[k * 3 + j];
        if (std::abs(dot - (i == j ? 1.0 : 0.0)) > 1e-9) throw ConfigError("rig rotation is not orthonormal");
      }
    const double det = R[0] * (R[4] * R[8] - R[5] * R[7]) - R[1] * (R[3] * R[8] - R[5] * R[6]) +
                       R[2] * (R[3] * R[7] - R[4] * R[6]);
    if (std::abs(det - 1.0) > 1e-9) throw ConfigError("rig rotation has determinant " + std::to_string(det));
  }
  bool operator==(const RigidTransform&) const = default;
};

/// Rectified pair; the right camera sits `baseline` metres along the left
/// camera's +x axis with the same orientation.
struct StereoRig {
  CameraIntrinsics left;
  CameraIntrinsics right;
  double baseline = 0.1;
  RigidTransform road_from_camera;  // road frame -> left camera frame

  RigidTransform left_transform() const { return road_from_camera; }
  RigidTransform right_transform() const {
    RigidTransform r = road_from_camera;
    r.t[0] -= baseline;
    return r;
  }
  void check() const {
    left.check();
    right.check();
    if (!(baseline > 0)) throw ConfigError("stereo baseline must be positive");
    road_from_camera.check();
  }
  bool operator==(const StereoRig&) const = default;
};

/// BEV lattice in the road frame: x lateral, y forward, z up (elevation).
struct VoxelGrid {
  double x_min = -1.5, x_max = 1.5;
  double y_min = 3.0, y_max = 9.0;
  int nx = 16, ny = 32;
  double e_min = -0.05, e_max = 0.05;
  int ne = 16;

  void check() const {
    if (nx < 1 || ny < 1 || ne < 1) throw ConfigError("grid cell counts must be at least 1");
    if (!(x_max > x_min) || !(y_max > y_min)) throw ConfigError("grid extents must be non-degenerate");
    if (!(e_max > e_min) && !(ne == 1 && e_max == e_min)) throw ConfigError("elevation range must be non-degenerate");
  }
  double cell_dx() const { return (x_max - x_min) / nx; }
  double cell_dy() const { return (y_max - y_min) / ny; }
  double x_center(int i) const { return x_min + (i + 0.5) * cell_dx(); }
  double y_center(int j) const { return y_min + (j + 0.5) * cell_dy(); }
  std::size_t cells() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
  std::size_t voxels() const { return cells() * static_cast<std::size_t>(ne); }
  bool operator==(const VoxelGrid&) const = default;
};

/// Bin centres in metres, uniformly spaced and including both range ends.
/// Written around the midpoint so symmetric ranges give exactly antisymmetric
/// bins.
inline std::vector<double> elevation_bins(const VoxelGrid& grid) {
  const double mid = 0.5 * (grid.e_min + grid.e_max), half = 0.5 * (grid.e_max - grid.e_min);
  if (grid.ne == 1) return {mid};
  std::vector<double> bins(static_cast<std::size_t>(grid.ne));
  const double span = grid.ne - 1;
  for (int k = 0; k < grid.ne; ++k) bins[static_cast<std::size_t>(k)] = mid + half * ((2.0 * k - span) / span);
  return bins;
}

struct PixelProjection {
  double u = 0, v = 0, depth = 0;
  bool visible = false;
};

inline PixelProjection voxel_to_pixel(const Vec3& p_road, const CameraIntrinsics& cam, const RigidTransform& tf) {
  const Vec3 p = tf.apply(p_road);
  PixelProjection out;
  out.depth = p[2];
  out.visible = p[2] > kDepthEpsilon;
  if (!out.visible) return out;
  out.u = cam.fx * p[0] / p[2] + cam.cx;
  out.v = cam.fy * p[1] / p[2] + cam.cy;
  return out;
}

inline Vec3 pixel_to_road(double u, double v, double depth, const CameraIntrinsics& cam, const RigidTransform& tf) {
  const Vec3 p_cam{(u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth};
  return tf.inverse_apply(p_cam);
}

struct FeatureVolume {
  Tensor values;                         // [2C, ne, ny, nx]
  std::vector<std::uint8_t> visibility;  // ne * ny * nx, same order as values' trailing dims

  bool visible(int k, int j, int i, const VoxelGrid& g) const {
    return visibility[(static_cast<std::size_t>(k) * g.ny + j) * g.nx + i] != 0;
  }
};

/// Samples both feature maps at every voxel centre. Each voxel gets the
/// left sample in channels [0, C) and the right one in [C, 2C); a voxel
/// that projects behind or outside either view stays all zero.
inline FeatureVolume build_feature_volume(const Tensor& left_feat, const Tensor& right_feat, const VoxelGrid& grid,
                                          const StereoRig& rig, int feat_stride) {
  if (left_feat.rank() != 3 || right_feat.rank() != 3)
    throw ShapeError("feature maps must be [C, h, w]");
  if (left_feat.shape() != right_feat.shape())
    throw ShapeError("left and right feature maps differ: " + shape_string(left_feat.shape()) + " vs " +
                     shape_string(right_feat.shape()));
  if (feat_stride < 1) throw ConfigError("feature stride must be positive");
  grid.check();
  const std::size_t C = left_feat.dim(0);
  const std::size_t ne = static_cast<std::size_t>(grid.ne), ny = static_cast<std::size_t>(grid.ny),
                    nx = static_cast<std::size_t>(grid.nx);
  FeatureVolume vol{Tensor({2 * C, ne, ny, nx}, 0.0), std::vector<std::uint8_t>(ne * ny * nx, 0)};
  const auto bins = elevation_bins(grid);
  const auto tl = rig.left_transform(), tr = rig.right_transform();
  const double s = feat_stride;
  auto out = vol.values.data();
  const std::size_t plane = ne * ny * nx;
  for (std::size_t k = 0; k < ne; ++k)
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const Vec3 p{grid.x_center(static_cast<int>(i)), grid.y_center(static_cast<int>(j)), bins[k]};
        const auto pl = voxel_to_pixel(p, rig.left, tl);
        const auto pr = voxel_to_pixel(p, rig.right, tr);
        if (!pl.visible || !pr.visible) continue;
        const Sample sl = bilinear_sample(left_feat, pl.u / s, pl.v / s);
        const Sample sr = bilinear_sample(right_feat, pr.u / s, pr.v / s);
        if (!sl.in_view || !sr.in_view) continue;
        const std::size_t voxel = (k * ny + j) * nx + i;
        vol.visibility[voxel] = 1;
        for (std::size_t c = 0; c < C; ++c) {
          out[c * plane + voxel] = sl.values[c];
          out[(C + c) * plane + voxel] = sr.values[c];
        }
      }
  return vol;
}

/// Forward-looking rig at `height` metres, pitched down to look at the
/// road point `look_at` metres ahead.
inline StereoRig forward_rig(const CameraIntrinsics& cam, double baseline, double height, double look_at) {
  const double th = std::atan2(height, look_at), c = std::cos(th), s = std::sin(th);
  // Road (x right, y forward, z up) to an unpitched camera (x right, y down, z forward),
  // then a pitch about the camera x axis.
  StereoRig rig;
  rig.left = rig.right = cam;
  rig.baseline = baseline;
  rig.road_from_camera.R = {1, 0, 0, 0, -s, -c, 0, c, -s};
  rig.road_from_camera.t = {0, c * height, s * height};
  return rig;
}

/// 96x64 pinhole pair, 0.2 m baseline, 1.5 m high, aimed 6 m ahead.
inline StereoRig desk_rig() { return forward_rig({80.0, 80.0, 47.5, 31.5, 96, 64}, 0.2, 1.5, 6.0); }

// ------------------------------------------------------------ rig file

namespace detail {

inline std::vector<double> parse_numbers(const std::string& key, const std::string& text, std::size_t count) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("rig key '" + key + "': '" + item + "' is not a number");
    }
  }
  if (out.size() != count)
    throw ConfigError("rig key '" + key + "' needs " + std::to_string(count) + " values, got " +
                      std::to_string(out.size()));
  return out;
}

inline std::string trim_text(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace detail

/// key=value calibration: fx_l fy_l cx_l cy_l width_l height_l, the same with
/// _r, baseline, R (nine values row-major) and t (three values).
inline StereoRig parse_rig(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    line = detail::trim_text(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("rig line without '=': " + line);
    kv[detail::trim_text(line.substr(0, eq))] = detail::trim_text(line.substr(eq + 1));
  }
  const auto need = [&](const std::string& key, std::size_t n) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("rig file is missing '" + key + "'");
    auto v = detail::parse_numbers(key, it->second, n);
    kv.erase(it);
    return v;
  };
  const auto camera = [&](const std::string& sfx) {
    CameraIntrinsics c;
    c.fx = need("fx" + sfx, 1)[0];
    c.fy = need("fy" + sfx, 1)[0];
    c.cx = need("cx" + sfx, 1)[0];
    c.cy = need("cy" + sfx, 1)[0];
    c.width = static_cast<int>(need("width" + sfx, 1)[0]);
    c.height = static_cast<int>(need("height" + sfx, 1)[0]);
    return c;
  };
  StereoRig rig;
  rig.left = camera("_l");
  rig.right = camera("_r");
  rig.baseline = need("baseline", 1)[0];
  const auto R = need("R", 9);
  const auto t = need("t", 3);
  std::copy(R.begin(), R.end(), rig.road_from_camera.R.begin());
  std::copy(t.begin(), t.end(), rig.road_from_camera.t.begin());
  if (!kv.empty()) throw ConfigError("unknown rig key '" + kv.begin()->first + "'");
  rig.check();
  return rig;
}

inline std::string format_rig(const StereoRig& rig) {
  std::ostringstream os;
  os.precision(17);
  const auto camera = [&](const CameraIntrinsics& c, const char* sfx) {
    os << "fx" << sfx << '=' << c.fx << "\nfy" << sfx << '=' << c.fy << "\ncx" << sfx << '=' << c.cx << "\ncy" << sfx
       << '=' << c.cy << "\nwidth" << sfx << '=' << c.width << "\nheight" << sfx << '=' << c.height << '\n';
  };
  camera(rig.left, "_l");
  camera(rig.right, "_r");
  os << "baseline=" << rig.baseline << "\nR=";
  for (int i = 0; i < 9; ++i) os << (i ? "," : "") << rig.road_from_camera.R[i];
  os << "\nt=";
  for (int i = 0; i < 3; ++i) os << (i ? "," : "") << rig.road_from_camera.t[i];
  os << '\n';
  return os.str();
}

}  // namespace rtbev
