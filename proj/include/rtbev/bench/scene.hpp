#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <future>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rtbev/bev/geometry.hpp"
#include "rtbev/core/errors.hpp"
#include "rtbev/core/tensor.hpp"
#include "rtbev/core/weights_io.hpp"
#include "rtbev/graph/text_format.hpp"

namespace rtbev {

/// One Gaussian surface feature. `amplitude_cm` is the peak height; a
/// pothole is stored with a negative amplitude.
struct SurfacePrimitive {
  double x0 = 0, y0 = 0;  // metres, road frame
  double sigma = 0.1;     // metres
  double amplitude_cm = 0;

  bool operator==(const SurfacePrimitive&) const = default;
};

struct SceneSpec {
  std::vector<SurfacePrimitive> surface;
  std::uint64_t texture_seed = 1;
  std::uint64_t noise_seed = 2;
  double noise_std = 0.01;

  void add_bump(double x0, double y0, double sigma, double amplitude_cm) {
    surface.push_back({x0, y0, sigma, amplitude_cm});
  }
  void add_pothole(double x0, double y0, double sigma, double depth_cm) {
    surface.push_back({x0, y0, sigma, -depth_cm});
  }
  void check() const {
    for (const auto& p : surface) {
      if (!(p.sigma > 0) || !std::isfinite(p.sigma)) throw SpecError("surface primitive sigma must be positive");
      if (!std::isfinite(p.amplitude_cm) || !std::isfinite(p.x0) || !std::isfinite(p.y0))
        throw SpecError("surface primitive has a non-finite field");
    }
    if (!(noise_std >= 0) || !std::isfinite(noise_std)) throw SpecError("noise_std must be finite and non-negative");
  }
  bool operator==(const SceneSpec&) const = default;
};

/// Elevation in cm on the prediction lattice, row-major [ny, nx].
struct GroundTruth {
  int ny = 0, nx = 0;
  std::vector<double> elevation_cm;

  double at(int j, int i) const { return elevation_cm[static_cast<std::size_t>(j) * nx + i]; }
  bool operator==(const GroundTruth&) const = default;
};

struct Scene {
  SceneSpec spec;
  Tensor left, right;  // [1, 3, H, W] in [0, 1]
  GroundTruth truth;
};

/// Road height in metres at (x, y).
inline double surface_height(const SceneSpec& spec, double x, double y) {
  double z = 0;
  for (const auto& p : spec.surface) {
    const double dx = x - p.x0, dy = y - p.y0;
    z += p.amplitude_cm * std::exp(-(dx * dx + dy * dy) / (2 * p.sigma * p.sigma));
  }
  return z / 100.0;
}

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline double lattice_value(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  const std::uint64_t h = mix64(seed ^ mix64(static_cast<std::uint64_t>(ix) * 0x632be59bd9b4e019ull ^
                                             mix64(static_cast<std::uint64_t>(iy))));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double value_noise(double x, double y, double cell, std::uint64_t seed) {
  const double gx = x / cell, gy = y / cell;
  const double fx = std::floor(gx), fy = std::floor(gy);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const auto smooth = [](double t) { return t * t * (3 - 2 * t); };
  const double tx = smooth(gx - fx), ty = smooth(gy - fy);
  const double a = lattice_value(ix, iy, seed), b = lattice_value(ix + 1, iy, seed);
  const double c = lattice_value(ix, iy + 1, seed), d = lattice_value(ix + 1, iy + 1, seed);
  return (a + (b - a) * tx) * (1 - ty) + (c + (d - c) * tx) * ty;
}

}  // namespace detail

/// Grey-level road texture in [0, 1]: two octaves of value noise.
inline double road_texture(double x, double y, std::uint64_t seed) {
  return 0.2 + 0.45 * detail::value_noise(x, y, 0.06, seed) + 0.35 * detail::value_noise(x, y, 0.25, seed + 1);
}

inline GroundTruth ground_truth(const SceneSpec& spec, const VoxelGrid& grid) {
  GroundTruth gt;
  gt.ny = grid.ny;
  gt.nx = grid.nx;
  gt.elevation_cm.resize(grid.cells());
  const double lo = grid.e_min * 100.0, hi = grid.e_max * 100.0;
  for (int j = 0; j < grid.ny; ++j)
    for (int i = 0; i < grid.nx; ++i) {
      const double e = 100.0 * surface_height(spec, grid.x_center(i), grid.y_center(j));
      if (!std::isfinite(e) || e < lo || e > hi)
        throw SpecError("elevation " + std::to_string(e) + " cm at cell (" + std::to_string(j) + ", " +
                        std::to_string(i) + ") is outside the grid range [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "] cm");
      gt.elevation_cm[static_cast<std::size_t>(j) * grid.nx + i] = e;
    }
  return gt;
}

namespace detail {

// Splats a lattice of textured road points into one camera, keeping the
// nearest point per pixel. Spacing grows with distance so neighbouring
// samples stay under half a pixel apart.
inline Tensor render_view(const SceneSpec& spec, const CameraIntrinsics& cam, const RigidTransform& tf, int width,
                          int height) {
  const auto W = static_cast<std::size_t>(width), H = static_cast<std::size_t>(height);
  Tensor img({1, 3, H, W}, 0.5);
  std::vector<double> zbuf(W * H, std::numeric_limits<double>::infinity());
  const double f = std::min(cam.fx, cam.fy);
  const double half_fov = (std::max(cam.cx, width - cam.cx) + 2.0) / cam.fx;
  const double y_near = 0.5, y_far = 80.0;
  auto d = img.data();
  const std::size_t plane = W * H;
  for (double y = y_near; y < y_far;) {
    const double step = std::max(0.004, 0.4 * y / f);
    const double x_span = 1.0 + y * half_fov;
    for (double x = -x_span; x <= x_span; x += step) {
      const auto p = voxel_to_pixel({x, y, surface_height(spec, x, y)}, cam, tf);
      if (!p.visible) continue;
      const double u = std::round(p.u), v = std::round(p.v);
      if (u < 0 || v < 0 || u >= width || v >= height) continue;
      const std::size_t px = static_cast<std::size_t>(v) * W + static_cast<std::size_t>(u);
      if (p.depth >= zbuf[px]) continue;
      zbuf[px] = p.depth;
      const double t = road_texture(x, y, spec.texture_seed);
      d[px] = t;
      d[plane + px] = 0.92 * t + 0.04;
      d[2 * plane + px] = 0.85 * t + 0.06;
    }
    y += step;
  }
  return img;
}

inline void add_pixel_noise(Tensor& img, double std_dev, std::mt19937_64& rng) {
  if (std_dev == 0) return;
  std::normal_distribution<double> n(0.0, std_dev);
  for (auto& v : img.data()) v = std::clamp(v + n(rng), 0.0, 1.0);
}

}  // namespace detail

/// Renders a stereo pair of the spec's road surface and evaluates its exact
/// elevation at the lattice cell centres. Deterministic per spec.
inline Scene generate_scene(const SceneSpec& spec, const VoxelGrid& grid, const StereoRig& rig, int width,
                            int height) {
  spec.check();
  grid.check();
  if (width <= 0 || height <= 0) throw ConfigError("image size must be positive");
  Scene s;
  s.spec = spec;
  s.truth = ground_truth(spec, grid);
  s.left = detail::render_view(spec, rig.left, rig.left_transform(), width, height);
  s.right = detail::render_view(spec, rig.right, rig.right_transform(), width, height);
  std::mt19937_64 rng(spec.noise_seed);
  detail::add_pixel_noise(s.left, spec.noise_std, rng);
  detail::add_pixel_noise(s.right, spec.noise_std, rng);
  return s;
}

/// One task per scene; results keep the order of `specs`.
inline std::vector<Scene> generate_scenes(const std::vector<SceneSpec>& specs, const VoxelGrid& grid,
                                          const StereoRig& rig, int width, int height) {
  std::vector<std::future<Scene>> jobs;
  for (const auto& spec : specs)
    jobs.push_back(std::async(std::launch::async, [&, spec] { return generate_scene(spec, grid, rig, width, height); }));
  std::vector<Scene> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

// ------------------------------------------------------------ scene files

namespace detail {

inline std::vector<double> scene_numbers(const std::string& key, const std::string& text, std::size_t count,
                                         std::size_t line) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) {
    const std::string s(trim(item));
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (s.empty() || used != s.size()) throw ParseError(line, "'" + key + "': '" + s + "' is not a number");
    out.push_back(v);
  }
  if (out.size() != count)
    throw ParseError(line, "'" + key + "' needs " + std::to_string(count) + " values, got " +
                               std::to_string(out.size()));
  return out;
}

}  // namespace detail

/// key=value lines: texture_seed, noise_seed, noise_std, and any number of
/// `bump=x0,y0,sigma,amplitude_cm` or `pothole=x0,y0,sigma,depth_cm`.
inline SceneSpec parse_scene_spec(const std::string& text) {
  SceneSpec spec;
  std::stringstream ss(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(ss, raw)) {
    ++lineno;
    const std::string line(detail::trim(raw.substr(0, raw.find('#'))));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected key=value");
    const std::string key(detail::trim(line.substr(0, eq))), value(detail::trim(line.substr(eq + 1)));
    if (key == "texture_seed") {
      spec.texture_seed = static_cast<std::uint64_t>(detail::scene_numbers(key, value, 1, lineno)[0]);
    } else if (key == "noise_seed") {
      spec.noise_seed = static_cast<std::uint64_t>(detail::scene_numbers(key, value, 1, lineno)[0]);
    } else if (key == "noise_std") {
      spec.noise_std = detail::scene_numbers(key, value, 1, lineno)[0];
    } else if (key == "bump" || key == "pothole") {
      const auto v = detail::scene_numbers(key, value, 4, lineno);
      if (key == "bump")
        spec.add_bump(v[0], v[1], v[2], v[3]);
      else
        spec.add_pothole(v[0], v[1], v[2], v[3]);
    } else {
      throw ParseError(lineno, "unknown scene key '" + key + "'");
    }
  }
  spec.check();
  return spec;
}

inline std::string format_scene_spec(const SceneSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << "texture_seed=" << spec.texture_seed << "\nnoise_seed=" << spec.noise_seed << "\nnoise_std=" << spec.noise_std
     << '\n';
  for (const auto& p : spec.surface) {
    const bool hole = p.amplitude_cm < 0;
    os << (hole ? "pothole=" : "bump=") << p.x0 << ',' << p.y0 << ',' << p.sigma << ','
       << (hole ? -p.amplitude_cm : p.amplitude_cm) << '\n';
  }
  return os.str();
}

/// A scene directory holds scene.spec and scene.bin (images and ground
/// truth in the weight-blob format, float32).
inline void save_scene(const std::string& dir, const Scene& s) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IOError("cannot create " + dir + ": " + ec.message());
  write_text_file((fs::path(dir) / "scene.spec").string(), format_scene_spec(s.spec));
  WeightStore blob;
  blob["left"] = s.left;
  blob["right"] = s.right;
  blob["elevation_cm"] = Tensor({static_cast<std::size_t>(s.truth.ny), static_cast<std::size_t>(s.truth.nx)},
                                s.truth.elevation_cm);
  save_weights((fs::path(dir) / "scene.bin").string(), blob);
}

inline Scene load_scene(const std::string& dir) {
  namespace fs = std::filesystem;
  Scene s;
  s.spec = parse_scene_spec(read_text_file((fs::path(dir) / "scene.spec").string()));
  const WeightStore blob = load_weights((fs::path(dir) / "scene.bin").string());
  const auto get = [&](const std::string& k) -> const Tensor& {
    auto it = blob.find(k);
    if (it == blob.end()) throw IOError(dir + "/scene.bin has no '" + k + "' entry");
    return it->second;
  };
  s.left = get("left");
  s.right = get("right");
  const Tensor& e = get("elevation_cm");
  if (e.rank() != 2) throw ShapeError("scene elevation must be [ny, nx], got " + shape_string(e.shape()));
  s.truth.ny = static_cast<int>(e.dim(0));
  s.truth.nx = static_cast<int>(e.dim(1));
  s.truth.elevation_cm.assign(e.data().begin(), e.data().end());
  return s;
}

}  // namespace rtbev
