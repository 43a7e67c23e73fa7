// Command-line front end: init, gen, infer, prune, bench, report.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rtbev/bench/benchmark.hpp"
#include "rtbev/bench/export.hpp"
#include "rtbev/bench/metrics.hpp"
#include "rtbev/bench/scene.hpp"
#include "rtbev/pipeline/bundle.hpp"
#include "rtbev/prune/pruner.hpp"
#include "rtbev/prune/report.hpp"

namespace fs = std::filesystem;
using namespace rtbev;

namespace {

Precision parse_precision(const std::string& s, Precision fallback) {
  if (s.empty()) return fallback;
  if (s == "full") return Precision::full;
  if (s == "mixed") return Precision::half;
  throw ConfigError("precision must be full or mixed, got '" + s + "'");
}

void write_json(const std::string& path, const nlohmann::json& j) { write_text_file(path, j.dump(2) + "\n"); }

// A scenes directory is either one scene or a directory of scene directories.
std::vector<Scene> load_scenes(const std::string& dir) {
  if (fs::exists(fs::path(dir) / "scene.spec")) return {load_scene(dir)};
  std::vector<std::string> dirs;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec))
    if (e.is_directory() && fs::exists(e.path() / "scene.spec")) dirs.push_back(e.path().string());
  if (ec) throw IOError("cannot list " + dir + ": " + ec.message());
  if (dirs.empty()) throw IOError("no scenes under " + dir);
  std::sort(dirs.begin(), dirs.end());
  std::vector<Scene> out;
  for (const auto& d : dirs) out.push_back(load_scene(d));
  return out;
}

int run_init(const std::string& out, const std::string& config_path, const std::string& head) {
  Bundle b;
  b.config = load_config(config_path);
  if (head == "baseline") b.config.head = b.config.baseline;
  b.model = make_model(b.config, b.config.head);
  save_bundle(out, b);
  const auto cost = model_cost(b.model, b.config.grid, b.config.image_width, b.config.image_height);
  std::printf("wrote %s: %s head, %llu params, %.3f GFLOPs per stereo pair\n", out.c_str(), head.c_str(),
              static_cast<unsigned long long>(cost.params()), static_cast<double>(cost.flops()) / 1e9);
  return 0;
}

int run_gen(const std::string& spec_path, const std::string& out, const std::string& config_path,
            const std::string& rig_path) {
  const ArtifactConfig cfg = load_config(config_path);
  const StereoRig rig = rig_path.empty() ? desk_rig() : parse_rig(read_text_file(rig_path));
  const SceneSpec spec = parse_scene_spec(read_text_file(spec_path));
  const Scene s = generate_scene(spec, cfg.grid, rig, cfg.image_width, cfg.image_height);
  save_scene(out, s);
  std::printf("wrote %s: %zu primitives, %dx%d images\n", out.c_str(), spec.surface.size(), cfg.image_width,
              cfg.image_height);
  return 0;
}

int run_infer(const std::string& model_dir, const std::string& scene_dir, const std::string& out,
              const std::string& precision) {
  const Bundle b = load_bundle(model_dir);
  const Scene s = load_scene(scene_dir);
  const Precision p = parse_precision(precision, b.config.head.precision);
  const Prediction pred = predict_elevation(s.left, s.right, b.model, b.rig, b.config.grid, p);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IOError("cannot create " + out + ": " + ec.message());
  const fs::path o(out);
  export_elevation(pred.map, (o / "elevation.pgm").string(), ElevationFormat::pgm);
  export_elevation(pred.map, (o / "elevation.csv").string(), ElevationFormat::csv);
  export_mesh(pred.map, b.config.grid, (o / "mesh.obj").string());
  nlohmann::json j{{"stage_ms", pred.stage_ms}, {"flops", pred.meter.total()}, {"valid_cells", pred.map.valid_count()}};
  try {
    const Accuracy a = compute_metrics(pred.map, s.truth);
    j["abs_err_cm"] = a.abs_err_cm;
    j["rmse_cm"] = a.rmse_cm;
    j["frac_gt_half_cm"] = a.frac_gt_half_cm;
    std::printf("abs err %.4f cm, rmse %.4f cm, >0.5cm %.2f%%\n", a.abs_err_cm, a.rmse_cm,
                100.0 * a.frac_gt_half_cm);
  } catch (const EmptyMask&) {
    std::printf("no valid cells; accuracy not computed\n");
  }
  write_json((o / "inference.json").string(), j);
  double total = 0;
  for (const auto& [k, v] : pred.stage_ms) total += v;
  std::printf("wrote %s: %zu/%zu valid cells, %.1f ms\n", out.c_str(), pred.map.valid_count(),
              pred.map.values.size(), total);
  return 0;
}

int run_prune(const std::string& model_dir, double ratio, const std::string& target, const std::string& out) {
  Bundle b = load_bundle(model_dir);
  const BudgetTarget t = target == "flops" ? BudgetTarget::flops : BudgetTarget::params;
  const std::map<std::string, Shape> shapes{
      {"image",
       {1, static_cast<std::size_t>(b.config.backbone.in_channels), static_cast<std::size_t>(b.config.image_height),
        static_cast<std::size_t>(b.config.image_width)}}};
  const NetworkGraph original = b.model.backbone;
  const PruneResult r = prune_to_budget(original, ratio, t, shapes);
  b.model.backbone = r.pruned_graph;
  save_bundle(out, b);
  write_json((fs::path(out) / "prune_report.json").string(), prune_report_json(original, r, ratio, t));
  std::printf("pruned backbone: params -%.1f%%, flops -%.1f%%, %zu selections; wrote %s\n",
              100.0 * r.param_reduction, 100.0 * r.flop_reduction, r.removed.size(), out.c_str());
  return 0;
}

int run_bench(const std::string& model_dir, const std::string& scenes_dir, int reps, int warmup,
              const std::string& json_out, const std::string& precision) {
  const Bundle b = load_bundle(model_dir);
  const auto scenes = load_scenes(scenes_dir);
  const MetricsReport r = benchmark(b, scenes, reps, warmup < 0 ? b.config.warmup : warmup,
                                    parse_precision(precision, b.config.head.precision));
  if (!json_out.empty()) write_json(json_out, to_json(r));
  std::cout << format_report(r);
  return 0;
}

int run_report(const std::string& json_in) {
  const auto text = read_text_file(json_in);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(json_in + ": " + e.what());
  }
  std::cout << format_report(metrics_from_json(j));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo road-surface elevation: inference, pruning and benchmarking"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "key=value config file (default: $RTB_CONFIG, then built-in)");

  std::string out, head = "optimized";
  auto* init = app.add_subcommand("init", "Write a model bundle with seeded random weights");
  init->add_option("--out", out, "Bundle directory")->required();
  init->add_option("--head", head, "Head variant")->check(CLI::IsMember({"optimized", "baseline"}));

  std::string spec_path, rig_path;
  auto* gen = app.add_subcommand("gen", "Render a synthetic stereo scene with ground truth");
  gen->add_option("--spec", spec_path, "Scene spec file")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Scene directory")->required();
  gen->add_option("--rig", rig_path, "Rig calibration file (default: desk rig)")->check(CLI::ExistingFile);

  std::string model_dir, scene_dir, precision;
  auto* infer = app.add_subcommand("infer", "Predict an elevation map and export PGM, CSV and OBJ");
  infer->add_option("--model", model_dir, "Bundle directory")->required()->check(CLI::ExistingDirectory);
  infer->add_option("--scene", scene_dir, "Scene directory")->required()->check(CLI::ExistingDirectory);
  infer->add_option("--out", out, "Output directory")->required();
  infer->add_option("--precision", precision, "Head precision (default: from config)")
      ->check(CLI::IsMember({"full", "mixed"}));

  double ratio = 0;
  std::string target;
  auto* prune = app.add_subcommand("prune", "Prune the backbone to a parameter or FLOP budget");
  prune->add_option("--model", model_dir, "Bundle directory")->required()->check(CLI::ExistingDirectory);
  prune->add_option("--ratio", ratio, "Target reduction in [0, 1)")->required();
  prune->add_option("--target", target, "Budget quantity")->required()->check(CLI::IsMember({"params", "flops"}));
  prune->add_option("--out", out, "Output bundle directory")->required();

  int reps = 20, warmup = -1;
  std::string json_path;
  auto* bench = app.add_subcommand("bench", "Median latency, FPS and accuracy over a set of scenes");
  bench->add_option("--model", model_dir, "Bundle directory")->required()->check(CLI::ExistingDirectory);
  bench->add_option("--scenes", scene_dir, "Scene directory or directory of scenes")
      ->required()
      ->check(CLI::ExistingDirectory);
  bench->add_option("--reps", reps, "Timed repetitions")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", warmup, "Discarded runs (default: from config)");
  bench->add_option("--json", json_path, "Metrics JSON output");
  bench->add_option("--precision", precision, "Head precision (default: from config)")
      ->check(CLI::IsMember({"full", "mixed"}));

  auto* report = app.add_subcommand("report", "Print a metrics JSON file as a table");
  report->add_option("--json", json_path, "Metrics JSON")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*init) return run_init(out, config_path, head);
    if (*gen) return run_gen(spec_path, out, config_path, rig_path);
    if (*infer) return run_infer(model_dir, scene_dir, out, precision);
    if (*prune) return run_prune(model_dir, ratio, target, out);
    if (*bench) return run_bench(model_dir, scene_dir, reps, warmup, json_path, precision);
    if (*report) return run_report(json_path);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
