#pragma once

#include <chrono>
#include <map>
#include <string>
#include <utility>

#include "rtbev/bev/geometry.hpp"
#include "rtbev/core/errors.hpp"
#include "rtbev/core/tensor.hpp"
#include "rtbev/graph/interpreter.hpp"
#include "rtbev/pipeline/softargmax.hpp"

namespace rtbev {

struct Model {
  NetworkGraph backbone;
  NetworkGraph head;
  int feat_stride = 4;
};

struct Prediction {
  ElevationMap map;
  CostMeter meter;
  std::map<std::string, double> stage_ms;  // backbone, volume, head, regression
};

inline constexpr const char* kStages[] = {"backbone", "volume", "head", "regression"};

namespace detail {

// Re-raises library errors with `context` prepended, keeping their type.
template <typename Fn>
auto with_context(const std::string& context, Fn&& fn) -> decltype(fn()) {
  const auto tag = [&](const Error& e) { return context + ": " + e.what(); };
  try {
    return fn();
  } catch (const ShapeError& e) {
    throw ShapeError(tag(e));
  } catch (const ValidationError& e) {
    throw ValidationError(tag(e));
  } catch (const MissingWeights& e) {
    throw MissingWeights(tag(e));
  } catch (const ConfigError& e) {
    throw ConfigError(tag(e));
  } catch (const EmptyMask& e) {
    throw EmptyMask(tag(e));
  }
}

template <typename Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  return with_context("stage '" + stage + "'", std::forward<Fn>(fn));
}

template <typename Fn>
auto timed(double& ms, Fn&& fn) -> decltype(fn()) {
  const auto t0 = std::chrono::steady_clock::now();
  auto r = fn();
  ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace detail

/// Runs the backbone on one [1, 3, H, W] image and returns [C, H/s, W/s].
inline Tensor extract_features(const Tensor& image, const NetworkGraph& backbone, int feat_stride,
                               CostMeter* meter = nullptr) {
  if (image.rank() != 4 || image.dim(0) != 1)
    throw ShapeError("image must be [1, C, H, W], got " + shape_string(image.shape()));
  const auto s = static_cast<std::size_t>(feat_stride);
  if (feat_stride < 1 || image.dim(2) % s != 0 || image.dim(3) % s != 0)
    throw ShapeError("image " + shape_string(image.shape()) + " is not divisible by feature stride " +
                     std::to_string(feat_stride));
  auto r = execute(backbone, {{"image", image}});
  if (meter) meter->merge(r.meter);
  const Tensor& f = r.outputs.at("features");
  if (f.dim(2) * s != image.dim(2) || f.dim(3) * s != image.dim(3))
    throw ShapeError("backbone output " + shape_string(f.shape()) + " does not match feature stride " +
                     std::to_string(feat_stride));
  return f.reshaped({f.dim(1), f.dim(2), f.dim(3)});
}

/// Stereo images to an elevation map. The head runs at `head_precision`
/// (half = emulated binary16); the soft-argmax always runs in full precision.
/// A cell is valid when every voxel of its column is seen by both cameras.
inline Prediction predict_elevation(const Tensor& left, const Tensor& right, const Model& model, const StereoRig& rig,
                                    const VoxelGrid& grid, Precision head_precision) {
  Prediction p;
  double ms_left = 0, ms_right = 0;
  const Tensor fl = detail::in_stage("backbone", [&] {
    return detail::timed(ms_left, [&] { return extract_features(left, model.backbone, model.feat_stride, &p.meter); });
  });
  const Tensor fr = detail::in_stage("backbone", [&] {
    return detail::timed(ms_right, [&] { return extract_features(right, model.backbone, model.feat_stride, &p.meter); });
  });
  p.stage_ms["backbone"] = ms_left + ms_right;

  const FeatureVolume vol = detail::in_stage("volume", [&] {
    return detail::timed(p.stage_ms["volume"],
                         [&] { return build_feature_volume(fl, fr, grid, rig, model.feat_stride); });
  });

  const Tensor scores = detail::in_stage("head", [&] {
    return detail::timed(p.stage_ms["head"], [&] {
      const Shape s = vol.values.shape();
      auto r = execute(model.head, {{"volume", vol.values.reshaped({1, s[0], s[1], s[2], s[3]})}}, head_precision);
      p.meter.merge(r.meter);
      return r.outputs.at("scores");
    });
  });

  p.map = detail::in_stage("regression", [&] {
    return detail::timed(p.stage_ms["regression"], [&] {
      ElevationMap m = fused_softargmax(scores, elevation_bins(grid));
      const std::size_t cells = grid.cells();
      for (std::size_t c = 0; c < cells; ++c) {
        bool all = true;
        for (std::size_t k = 0; k < static_cast<std::size_t>(grid.ne) && all; ++k)
          all = vol.visibility[k * cells + c] != 0;
        m.valid[c] = all ? 1 : 0;
      }
      return m;
    });
  });
  return p;
}

}  // namespace rtbev
