#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rtbev/bench/metrics.hpp"
#include "rtbev/bench/scene.hpp"
#include "rtbev/graph/cost.hpp"
#include "rtbev/pipeline/bundle.hpp"
#include "rtbev/pipeline/predict.hpp"

namespace rtbev {

struct MetricsReport {
  double abs_err_cm = 0;
  double rmse_cm = 0;
  double frac_gt_half_cm = 0;
  double fps = 0;
  std::map<std::string, double> stage_ms;  // median per stage
  double total_ms = 0;                     // median end-to-end
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
};

struct ModelCost {
  std::uint64_t backbone_flops = 0, head_flops = 0;
  std::uint64_t backbone_params = 0, head_params = 0;

  std::uint64_t flops() const { return 2 * backbone_flops + head_flops; }  // two images
  std::uint64_t params() const { return backbone_params + head_params; }
};

inline ModelCost model_cost(const Model& m, const VoxelGrid& grid, int width, int height) {
  const auto b = analytic_cost(m.backbone, {{"image", {1, 3, static_cast<std::size_t>(height),
                                                       static_cast<std::size_t>(width)}}});
  std::size_t volume_channels = 0;
  for (const auto& l : m.head.layers)
    if (l.kind == LayerKind::input) volume_channels = static_cast<std::size_t>(l.channels);
  const auto h = analytic_cost(
      m.head, {{"volume", {1, volume_channels, static_cast<std::size_t>(grid.ne), static_cast<std::size_t>(grid.ny),
                           static_cast<std::size_t>(grid.nx)}}});
  return {b.total_flops, h.total_flops, b.total_params, h.total_params};
}

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Runs every scene `warmup + repetitions` times, one inference at a time.
/// Timings are medians over the kept repetitions of all scenes; accuracy is
/// the mean over scenes of the per-scene metrics.
inline MetricsReport benchmark(const Bundle& bundle, const std::vector<Scene>& scenes, int repetitions, int warmup,
                               Precision head_precision) {
  if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
  if (warmup < 0) throw ConfigError("warmup must be non-negative");
  if (scenes.empty()) throw ConfigError("benchmark needs at least one scene");
  const VoxelGrid& grid = bundle.config.grid;
  std::map<std::string, std::vector<double>> samples;
  std::vector<double> totals;
  std::vector<Accuracy> acc(scenes.size());
  for (int r = 0; r < warmup + repetitions; ++r)
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      const Prediction p = detail::with_context("scene " + std::to_string(s), [&] {
        return predict_elevation(scenes[s].left, scenes[s].right, bundle.model, bundle.rig, grid, head_precision);
      });
      if (r == warmup) acc[s] = detail::with_context("scene " + std::to_string(s), [&] {
        return compute_metrics(p.map, scenes[s].truth);
      });
      if (r < warmup) continue;
      double total = 0;
      for (const auto& [stage, ms] : p.stage_ms) {
        samples[stage].push_back(ms);
        total += ms;
      }
      totals.push_back(total);
    }
  MetricsReport rep;
  for (const auto& a : acc) {
    rep.abs_err_cm += a.abs_err_cm;
    rep.rmse_cm += a.rmse_cm;
    rep.frac_gt_half_cm += a.frac_gt_half_cm;
  }
  const double n = static_cast<double>(scenes.size());
  rep.abs_err_cm /= n;
  rep.rmse_cm /= n;
  rep.frac_gt_half_cm /= n;
  for (const auto& [stage, v] : samples) rep.stage_ms[stage] = detail::median(v);
  rep.total_ms = detail::median(totals);
  rep.fps = rep.total_ms > 0 ? 1000.0 / rep.total_ms : 0.0;
  const auto cost = model_cost(bundle.model, grid, static_cast<int>(scenes.front().left.dim(3)),
                               static_cast<int>(scenes.front().left.dim(2)));
  rep.flops = cost.flops();
  rep.params = cost.params();
  return rep;
}

/// Median wall time of one network execution over `repetitions` runs after
/// `warmup` discarded runs.
inline double median_execution_ms(const NetworkGraph& g, const std::map<std::string, Tensor>& inputs,
                                  int repetitions, int warmup, Precision precision) {
  std::vector<double> ms;
  for (int r = 0; r < warmup + repetitions; ++r) {
    double t = 0;
    detail::timed(t, [&] { return execute(g, inputs, precision); });
    if (r >= warmup) ms.push_back(t);
  }
  return detail::median(ms);
}

// ------------------------------------------------------------ reporting

inline nlohmann::json to_json(const MetricsReport& r) {
  return {{"abs_err_cm", r.abs_err_cm}, {"rmse_cm", r.rmse_cm}, {"frac_gt_half_cm", r.frac_gt_half_cm},
          {"fps", r.fps},               {"stage_ms", r.stage_ms}, {"total_ms", r.total_ms},
          {"flops", r.flops},           {"params", r.params}};
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  try {
    MetricsReport r;
    r.abs_err_cm = j.at("abs_err_cm").get<double>();
    r.rmse_cm = j.at("rmse_cm").get<double>();
    r.frac_gt_half_cm = j.at("frac_gt_half_cm").get<double>();
    r.fps = j.at("fps").get<double>();
    r.stage_ms = j.at("stage_ms").get<std::map<std::string, double>>();
    r.total_ms = j.value("total_ms", 0.0);
    r.flops = j.at("flops").get<std::uint64_t>();
    r.params = j.at("params").get<std::uint64_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("metrics json: ") + e.what());
  }
}

/// Plain-text table: accuracy and FPS columns, then stage timings and cost.
inline std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  os << std::fixed;
  os << std::left << std::setw(16) << "Abs. err. (cm)" << std::setw(12) << "RMSE (cm)" << std::setw(14)
     << ">0.5cm (%)" << "FPS\n";
  os << std::setprecision(3) << std::setw(16) << r.abs_err_cm << std::setw(12) << r.rmse_cm << std::setprecision(2)
     << std::setw(14) << 100.0 * r.frac_gt_half_cm << std::setprecision(2) << r.fps << "\n\n";
  os << "stage latency (median ms)\n";
  for (const char* s : kStages) {
    auto it = r.stage_ms.find(s);
    if (it != r.stage_ms.end()) os << "  " << std::setw(12) << s << std::setprecision(2) << it->second << '\n';
  }
  os << "  " << std::setw(12) << "total" << std::setprecision(2) << r.total_ms << "\n\n";
  os << "GFLOPs  " << std::setprecision(3) << static_cast<double>(r.flops) / 1e9 << '\n';
  os << "params  " << r.params << '\n';
  return os.str();
}

}  // namespace rtbev
