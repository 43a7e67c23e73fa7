#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rtbev/bev/geometry.hpp"
#include "rtbev/core/errors.hpp"
#include "rtbev/graph/text_format.hpp"
#include "rtbev/pipeline/networks.hpp"

namespace rtbev {

/// Everything a run needs besides the rig: lattice, network shapes, seeds,
/// benchmark settings and the mixed-precision tolerance.
struct ArtifactConfig {
  VoxelGrid grid;
  BackboneConfig backbone = desk_backbone();
  HeadConfig head = optimized_head();
  HeadConfig baseline = baseline_head();
  std::uint64_t seed = 7;
  int image_width = 96;
  int image_height = 64;
  int repetitions = 20;
  int warmup = 3;
  double mixed_tolerance_cm = 0.05;

  void check() const {
    grid.check();
    backbone.check();
    head.check();
    baseline.check();
    if (image_width <= 0 || image_height <= 0) throw ConfigError("image size must be positive");
    if (image_width % backbone.feat_stride || image_height % backbone.feat_stride)
      throw ConfigError("image size must be divisible by the feature stride");
    if (repetitions < 1) throw ConfigError("bench.repetitions must be at least 1");
    if (warmup < 0) throw ConfigError("bench.warmup must be non-negative");
    if (!(mixed_tolerance_cm > 0)) throw ConfigError("tolerance.mixed_precision_cm must be positive");
  }
  bool operator==(const ArtifactConfig&) const = default;
};

inline constexpr const char* kConfigEnv = "RTB_CONFIG";

namespace detail {

struct ConfigField {
  std::function<void(ArtifactConfig&, const std::string&)> set;
  std::function<std::string(const ArtifactConfig&)> get;
};

inline double config_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
}

inline long long config_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long d = std::stoll(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
}

inline bool config_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

// Shortest text that reads back to the same double.
inline std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// Stages as blocks:channels:stride:expand:se, comma separated.
inline std::vector<StageConfig> parse_stages(const std::string& v) {
  std::vector<StageConfig> out;
  for (const auto& item : split(v, ',')) {
    const auto parts = split(trim(item), ':');
    if (parts.size() != 5) throw ConfigError("backbone stage '" + item + "' needs blocks:channels:stride:expand:se");
    StageConfig s;
    s.blocks = static_cast<int>(config_int("backbone.stages", parts[0]));
    s.channels = static_cast<int>(config_int("backbone.stages", parts[1]));
    s.stride = static_cast<int>(config_int("backbone.stages", parts[2]));
    s.expand_ratio = static_cast<int>(config_int("backbone.stages", parts[3]));
    s.use_se = config_bool("backbone.stages", parts[4]);
    out.push_back(s);
  }
  return out;
}

inline std::string format_stages(const std::vector<StageConfig>& stages) {
  std::string out;
  for (const auto& s : stages) {
    if (!out.empty()) out += ',';
    out += std::to_string(s.blocks) + ':' + std::to_string(s.channels) + ':' + std::to_string(s.stride) + ':' +
           std::to_string(s.expand_ratio) + ':' + (s.use_se ? "1" : "0");
  }
  return out;
}

inline std::vector<std::pair<std::string, ConfigField>> config_fields() {
  std::vector<std::pair<std::string, ConfigField>> f;
  const auto dbl = [&](const std::string& key, auto getter) {
    f.push_back({key,
                 {[=](ArtifactConfig& c, const std::string& v) { getter(c) = config_double(key, v); },
                  [=](const ArtifactConfig& c) { return fmt_double(getter(const_cast<ArtifactConfig&>(c))); }}});
  };
  const auto integer = [&](const std::string& key, auto getter) {
    f.push_back({key,
                 {[=](ArtifactConfig& c, const std::string& v) {
                    getter(c) = static_cast<std::remove_reference_t<decltype(getter(c))>>(config_int(key, v));
                  },
                  [=](const ArtifactConfig& c) { return std::to_string(getter(const_cast<ArtifactConfig&>(c))); }}});
  };
  const auto boolean = [&](const std::string& key, auto getter) {
    f.push_back({key,
                 {[=](ArtifactConfig& c, const std::string& v) { getter(c) = config_bool(key, v); },
                  [=](const ArtifactConfig& c) {
                    return std::string(getter(const_cast<ArtifactConfig&>(c)) ? "true" : "false");
                  }}});
  };
  dbl("grid.x_min", [](ArtifactConfig& c) -> double& { return c.grid.x_min; });
  dbl("grid.x_max", [](ArtifactConfig& c) -> double& { return c.grid.x_max; });
  dbl("grid.y_min", [](ArtifactConfig& c) -> double& { return c.grid.y_min; });
  dbl("grid.y_max", [](ArtifactConfig& c) -> double& { return c.grid.y_max; });
  integer("grid.nx", [](ArtifactConfig& c) -> int& { return c.grid.nx; });
  integer("grid.ny", [](ArtifactConfig& c) -> int& { return c.grid.ny; });
  dbl("grid.e_min", [](ArtifactConfig& c) -> double& { return c.grid.e_min; });
  dbl("grid.e_max", [](ArtifactConfig& c) -> double& { return c.grid.e_max; });
  integer("grid.ne", [](ArtifactConfig& c) -> int& { return c.grid.ne; });
  integer("backbone.in_channels", [](ArtifactConfig& c) -> int& { return c.backbone.in_channels; });
  integer("backbone.stem_channels", [](ArtifactConfig& c) -> int& { return c.backbone.stem_channels; });
  integer("backbone.stem_stride", [](ArtifactConfig& c) -> int& { return c.backbone.stem_stride; });
  f.push_back({"backbone.stages",
               {[](ArtifactConfig& c, const std::string& v) { c.backbone.stages = parse_stages(v); },
                [](const ArtifactConfig& c) { return format_stages(c.backbone.stages); }}});
  integer("backbone.feat_stride", [](ArtifactConfig& c) -> int& { return c.backbone.feat_stride; });
  integer("backbone.se_reduction", [](ArtifactConfig& c) -> int& { return c.backbone.se_reduction; });
  for (const std::string prefix : {"head", "baseline"}) {
    const auto pick = [prefix](ArtifactConfig& c) -> HeadConfig& { return prefix == "head" ? c.head : c.baseline; };
    integer(prefix + ".base_channels", [pick](ArtifactConfig& c) -> int& { return pick(c).base_channels; });
    integer(prefix + ".levels", [pick](ArtifactConfig& c) -> int& { return pick(c).hourglass_levels; });
    boolean(prefix + ".attention", [pick](ArtifactConfig& c) -> bool& { return pick(c).use_dynamic_attention; });
    integer(prefix + ".attention_reduction", [pick](ArtifactConfig& c) -> int& { return pick(c).attention_reduction; });
    const std::string key = prefix + ".precision";
    f.push_back({key,
                 {[pick, key](ArtifactConfig& c, const std::string& v) {
                    if (v == "full")
                      pick(c).precision = Precision::full;
                    else if (v == "mixed")
                      pick(c).precision = Precision::half;
                    else
                      throw ConfigError("config key '" + key + "' must be full or mixed, got '" + v + "'");
                  },
                  [pick](const ArtifactConfig& c) {
                    return std::string(pick(const_cast<ArtifactConfig&>(c)).precision == Precision::full ? "full"
                                                                                                         : "mixed");
                  }}});
  }
  integer("model.seed", [](ArtifactConfig& c) -> std::uint64_t& { return c.seed; });
  integer("image.width", [](ArtifactConfig& c) -> int& { return c.image_width; });
  integer("image.height", [](ArtifactConfig& c) -> int& { return c.image_height; });
  integer("bench.repetitions", [](ArtifactConfig& c) -> int& { return c.repetitions; });
  integer("bench.warmup", [](ArtifactConfig& c) -> int& { return c.warmup; });
  dbl("tolerance.mixed_precision_cm", [](ArtifactConfig& c) -> double& { return c.mixed_tolerance_cm; });
  return f;
}

}  // namespace detail

/// key=value lines, '#' comments. Keys not given keep their defaults;
/// unknown keys are rejected.
inline ArtifactConfig parse_config(const std::string& text) {
  ArtifactConfig cfg;
  const auto fields = detail::config_fields();
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string body(detail::trim(line.substr(0, line.find('#'))));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + " has no '='");
    const std::string key(detail::trim(body.substr(0, eq)));
    const std::string value(detail::trim(body.substr(eq + 1)));
    auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.first == key; });
    if (it == fields.end()) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->second.set(cfg, value);
  }
  cfg.check();
  return cfg;
}

inline std::string format_config(const ArtifactConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : detail::config_fields()) out += key + "=" + field.get(cfg) + "\n";
  return out;
}

/// Reads `path`, or the file named by RTB_CONFIG when `path` is empty, or
/// returns the built-in defaults when neither is set.
inline ArtifactConfig load_config(const std::string& path = {}) {
  std::string p = path;
  if (p.empty())
    if (const char* env = std::getenv(kConfigEnv)) p = env;
  if (p.empty()) return ArtifactConfig{};
  return parse_config(read_text_file(p));
}

}  // namespace rtbev
