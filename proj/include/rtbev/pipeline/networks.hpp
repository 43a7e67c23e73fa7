#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "rtbev/core/errors.hpp"
#include "rtbev/core/tensor.hpp"
#include "rtbev/graph/builder.hpp"
#include "rtbev/graph/validate.hpp"

namespace rtbev {

struct StageConfig {
  int blocks = 1;
  int channels = 16;
  int stride = 1;
  int expand_ratio = 4;
  bool use_se = true;
  bool operator==(const StageConfig&) const = default;
};

struct BackboneConfig {
  int in_channels = 3;
  int stem_channels = 16;
  int stem_stride = 2;
  std::vector<StageConfig> stages;
  int feat_stride = 4;
  int se_reduction = 4;

  void check() const {
    if (in_channels <= 0 || stem_channels <= 0) throw ConfigError("backbone channel counts must be positive");
    if (stem_stride != 1 && stem_stride != 2) throw ConfigError("backbone stem stride must be 1 or 2");
    if (stages.empty()) throw ConfigError("backbone needs at least one stage");
    if (se_reduction <= 0) throw ConfigError("squeeze-excite reduction must be positive");
    int product = stem_stride;
    for (const auto& s : stages) {
      if (s.blocks <= 0 || s.channels <= 0 || s.expand_ratio <= 0)
        throw ConfigError("backbone stage values must be positive");
      if (s.stride != 1 && s.stride != 2) throw ConfigError("backbone stage stride must be 1 or 2");
      product *= s.stride;
    }
    if (product != feat_stride)
      throw ConfigError("feat_stride " + std::to_string(feat_stride) + " does not equal the stride product " +
                        std::to_string(product));
  }
  int out_channels() const { return stages.back().channels; }
  bool operator==(const BackboneConfig&) const = default;
};

/// Stem 16 at stride 2, then (2x24 s1), (2x40 s2), (3x64 s1), expand 4,
/// squeeze-excite everywhere: feature stride 4 with 64 channels.
inline BackboneConfig desk_backbone() {
  BackboneConfig c;
  c.stages = {{2, 24, 1, 4, true}, {2, 40, 2, 4, true}, {3, 64, 1, 4, true}};
  c.feat_stride = 4;
  return c;
}

struct HeadConfig {
  int base_channels = 16;
  int hourglass_levels = 2;
  bool use_dynamic_attention = true;
  Precision precision = Precision::half;  // half = mixed: head in binary16, regression in full
  int attention_reduction = 4;

  void check() const {
    if (base_channels <= 0) throw ConfigError("head base channels must be positive");
    if (hourglass_levels < 1) throw ConfigError("hourglass needs at least one level");
    if (attention_reduction <= 0) throw ConfigError("attention reduction must be positive");
  }
  bool operator==(const HeadConfig&) const = default;
};

inline HeadConfig baseline_head() { return {32, 2, false, Precision::full, 4}; }
inline HeadConfig optimized_head() { return {16, 2, true, Precision::half, 4}; }

namespace detail {

// Stride-2 layers use a 4-wide kernel with padding 1 so even extents halve exactly.
inline int kernel_for(int stride) { return stride == 2 ? 4 : 3; }

}  // namespace detail

/// Input stream "image" [N, 3, H, W]; output stream "features".
inline NetworkGraph build_backbone(const BackboneConfig& cfg) {
  cfg.check();
  GraphBuilder b;
  std::string x = b.input("image", cfg.in_channels, "image");
  const int stem_k = detail::kernel_for(cfg.stem_stride);
  x = b.conv2d("stem", x, cfg.in_channels, cfg.stem_channels, stem_k, cfg.stem_stride, 1, 1, false);
  x = b.affine("stem_bn", x, cfg.stem_channels);
  x = b.activation("stem_act", x);
  int ch = cfg.stem_channels;
  for (std::size_t si = 0; si < cfg.stages.size(); ++si) {
    const auto& st = cfg.stages[si];
    for (int bi = 0; bi < st.blocks; ++bi) {
      const std::string p = "s" + std::to_string(si + 1) + "b" + std::to_string(bi + 1) + "_";
      const int stride = bi == 0 ? st.stride : 1;
      const int hidden = ch * st.expand_ratio;
      const std::string block_in = x;
      std::string y = b.conv2d(p + "expand", x, ch, hidden, 1, 1, 0, 1, false);
      y = b.affine(p + "expand_bn", y, hidden);
      y = b.activation(p + "expand_act", y);
      const int k = detail::kernel_for(stride);
      y = b.conv2d(p + "dw", y, hidden, hidden, k, stride, 1, hidden, false);
      y = b.affine(p + "dw_bn", y, hidden);
      y = b.activation(p + "dw_act", y);
      if (st.use_se) y = b.gate(p + "se", y, hidden, std::max(1, ch / cfg.se_reduction));
      y = b.conv2d(p + "project", y, hidden, st.channels, 1, 1, 0, 1, false);
      y = b.affine(p + "project_bn", y, st.channels);
      if (stride == 1 && ch == st.channels) y = b.add(p + "add", {block_in, y});
      x = y;
      ch = st.channels;
    }
  }
  b.output("features", x, "features");
  b.meta("role", "backbone");
  b.meta("feat_stride", std::to_string(cfg.feat_stride));
  auto g = std::move(b).build();
  require_valid(g, false);
  return g;
}

/// Hourglass over a [N, 2C, ne, ny, nx] volume (input stream "volume"),
/// emitting one score channel (output stream "scores").
inline NetworkGraph build_head(const HeadConfig& cfg, int ne, int volume_channels) {
  cfg.check();
  if (volume_channels <= 0) throw ConfigError("head input channel count must be positive");
  const int factor = 1 << cfg.hourglass_levels;
  if (ne <= 0 || ne % factor != 0)
    throw ConfigError("elevation bins (" + std::to_string(ne) + ") must be divisible by 2^levels = " +
                      std::to_string(factor));
  GraphBuilder b;
  std::string x = b.input("h_in", volume_channels, "volume");
  int ch = cfg.base_channels;
  x = b.conv3d("h_stem", x, volume_channels, ch, 3, 1, 1);
  x = b.activation("h_stem_act", x);
  std::vector<std::string> skips{x};
  std::vector<int> widths{ch};
  for (int l = 1; l <= cfg.hourglass_levels; ++l) {
    const std::string p = "h_l" + std::to_string(l) + "_";
    x = b.conv3d(p + "down", x, ch, 2 * ch, 4, 2, 1);
    x = b.activation(p + "down_act", x);
    ch *= 2;
    x = b.conv3d(p + "conv", x, ch, ch, 3, 1, 1);
    x = b.activation(p + "conv_act", x);
    skips.push_back(x);
    widths.push_back(ch);
  }
  if (cfg.use_dynamic_attention) x = b.gate("h_gate", x, ch, std::max(1, ch / cfg.attention_reduction));
  for (int l = cfg.hourglass_levels; l >= 1; --l) {
    const std::string p = "h_l" + std::to_string(l) + "_";
    const int to = widths[static_cast<std::size_t>(l - 1)];
    x = b.deconv3d(p + "up", x, ch, to);
    x = b.add(p + "skip", {x, skips[static_cast<std::size_t>(l - 1)]});
    x = b.activation(p + "skip_act", x);
    ch = to;
  }
  x = b.conv3d("h_score", x, ch, 1, 3, 1, 1);
  b.output("h_out", x, "scores");
  b.meta("role", "head");
  auto g = std::move(b).build();
  require_valid(g, false);
  return g;
}

}  // namespace rtbev
