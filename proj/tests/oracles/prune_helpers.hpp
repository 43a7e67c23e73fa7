#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "oracles/reference_ops.hpp"
#include "rtbev/graph/dependency.hpp"
#include "rtbev/graph/graph.hpp"

namespace rtbev::oracle {

inline std::map<std::string, Tensor> random_feeds(std::mt19937_64& rng, const NetworkGraph& g) {
  std::map<std::string, Tensor> feeds;
  for (const auto& l : g.layers)
    if (l.kind == LayerKind::input)
      feeds.emplace(l.stream_name(), random_tensor(rng, {1, static_cast<std::size_t>(l.channels), 5, 5}));
  return feeds;
}

// Zeroes every weight entry coupled to `channel` of `group`, written against
// tensor shapes directly rather than through the pruner's slice table.
inline void zero_channel(NetworkGraph& g, const ChannelGroup& group, std::size_t channel) {
  const auto zero_axis = [](Tensor& t, std::size_t axis, std::size_t index) {
    const auto& s = t.shape();
    std::vector<std::size_t> idx(s.size(), 0);
    for (std::size_t flat = 0; flat < t.numel(); ++flat) {
      std::size_t rem = flat;
      for (std::size_t a = s.size(); a-- > 0;) {
        idx[a] = rem % s[a];
        rem /= s[a];
      }
      if (idx[axis] == index) t[flat] = 0.0;
    }
  };
  for (const auto& m : group.members) {
    const auto& l = g.layer(m.layer);
    const std::size_t c = m.begin + channel;
    const auto w = [&](const std::string& suffix) -> Tensor& { return g.weights.at(l.id + suffix); };
    if (l.kind == LayerKind::attention_gate) {
      zero_axis(w(".fc1.weight"), 1, c);
      zero_axis(w(".fc2.weight"), 0, c);
      zero_axis(w(".fc2.bias"), 0, c);
    } else if (l.kind == LayerKind::affine) {
      zero_axis(w(".weight"), 0, c);
      zero_axis(w(".bias"), 0, c);
    } else if (m.role == ChannelRole::in_channels) {
      zero_axis(w(".weight"), l.kind == LayerKind::deconv3d ? 0 : 1, c);
    } else {
      zero_axis(w(".weight"), l.kind == LayerKind::deconv3d ? 1 : 0, c);
      if (l.bias) zero_axis(w(".bias"), 0, c);
    }
  }
}

}  // namespace rtbev::oracle
