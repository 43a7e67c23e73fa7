#pragma once

#include <filesystem>
#include <string>

#include "rtbev/bev/geometry.hpp"
#include "rtbev/core/weights_io.hpp"
#include "rtbev/graph/init.hpp"
#include "rtbev/graph/text_format.hpp"
#include "rtbev/graph/validate.hpp"
#include "rtbev/pipeline/config.hpp"
#include "rtbev/pipeline/networks.hpp"
#include "rtbev/pipeline/predict.hpp"

namespace rtbev {

/// Backbone and head built from `cfg` with seeded random weights. The head
/// shape comes from `head`, so the same call yields the baseline variant.
inline Model make_model(const ArtifactConfig& cfg, const HeadConfig& head) {
  Model m;
  m.backbone = build_backbone(cfg.backbone);
  m.head = build_head(head, cfg.grid.ne, 2 * cfg.backbone.out_channels());
  m.feat_stride = cfg.backbone.feat_stride;
  initialize_weights(m.backbone, cfg.seed);
  initialize_weights(m.head, cfg.seed + 1);
  return m;
}

/// A model directory: backbone.g, head.g, weights.bin, config.cfg, rig.cal.
struct Bundle {
  ArtifactConfig config;
  StereoRig rig = desk_rig();
  Model model;
};

inline int feat_stride_of(const NetworkGraph& backbone, int fallback) {
  auto it = backbone.metadata.find("feat_stride");
  if (it == backbone.metadata.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw ConfigError("backbone metadata feat_stride '" + it->second + "' is not an integer");
  }
}

inline void save_bundle(const std::string& dir, const Bundle& b) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IOError("cannot create " + dir + ": " + ec.message());
  const fs::path p(dir);
  write_text_file((p / "backbone.g").string(), serialize_graph(b.model.backbone));
  write_text_file((p / "head.g").string(), serialize_graph(b.model.head));
  WeightStore all = b.model.backbone.weights;
  for (const auto& [k, v] : b.model.head.weights)
    if (!all.emplace(k, v).second) throw ValidationError("weight name '" + k + "' is used by both networks");
  save_weights((p / "weights.bin").string(), all);
  write_text_file((p / "config.cfg").string(), format_config(b.config));
  write_text_file((p / "rig.cal").string(), format_rig(b.rig));
}

inline Bundle load_bundle(const std::string& dir) {
  const std::filesystem::path p(dir);
  Bundle b;
  b.config = parse_config(read_text_file((p / "config.cfg").string()));
  b.rig = parse_rig(read_text_file((p / "rig.cal").string()));
  b.model.backbone = parse_graph(read_text_file((p / "backbone.g").string()));
  b.model.head = parse_graph(read_text_file((p / "head.g").string()));
  const WeightStore pool = load_weights((p / "weights.bin").string());
  b.model.backbone.weights = weights_for(b.model.backbone, pool);
  b.model.head.weights = weights_for(b.model.head, pool);
  b.model.feat_stride = feat_stride_of(b.model.backbone, b.config.backbone.feat_stride);
  require_valid(b.model.backbone);
  require_valid(b.model.head);
  return b;
}

}  // namespace rtbev
