#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "rtbev/graph/graph.hpp"
#include "rtbev/graph/validate.hpp"

namespace rtbev {

enum class ChannelRole { out_channels, in_channels };

enum class GroupCause { producer_consumer, concat_slice, depthwise_tie, residual_add };

inline std::string_view to_string(ChannelRole r) { return r == ChannelRole::out_channels ? "out" : "in"; }

inline std::string_view to_string(GroupCause c) {
  switch (c) {
    case GroupCause::residual_add: return "residual-add";
    case GroupCause::concat_slice: return "concat-slice";
    case GroupCause::depthwise_tie: return "depthwise-tie";
    default: return "producer-consumer";
  }
}

/// A slice of one layer's channel axis. Producers (conv/deconv) and
/// channel-wise layers (affine, gate, depthwise conv) appear with the
/// out-channels role; convolutions reading the group appear as in-channels.
struct GroupMember {
  std::string layer;
  ChannelRole role = ChannelRole::out_channels;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t slot = 0;   // position of this segment in the layer's channel layout
  std::size_t slots = 1;  // number of segments in that layout

  std::size_t width() const { return end - begin; }
  bool operator==(const GroupMember&) const = default;
};

struct ChannelGroup {
  std::vector<GroupMember> members;
  GroupCause cause = GroupCause::producer_consumer;
  std::size_t width = 0;
  std::string anchor;  // earliest producer in layer order
  std::vector<std::string> carriers;  // parameter-free layers routing these channels

  bool operator==(const ChannelGroup&) const = default;
};

namespace detail {

struct Segment {
  std::size_t space;
  std::size_t width;
};

struct DisjointSet {
  std::vector<std::size_t> parent;
  std::size_t make() {
    parent.push_back(parent.size());
    return parent.size() - 1;
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace detail

/// Partitions every prunable channel dimension into groups that must shrink
/// together. Channels that reach an input or output stream, and the hidden
/// width of attention gates, are not prunable and appear in no group.
inline std::vector<ChannelGroup> build_dependency_groups(const NetworkGraph& g) {
  require_valid(g, false);
  detail::DisjointSet sets;
  struct SpaceInfo {
    std::size_t width = 0;
    bool pinned = false;
    bool merged_by_add = false;
    std::vector<std::pair<std::size_t, GroupMember>> members;  // (layer index, member)
    std::vector<std::size_t> carriers;
  };
  std::vector<SpaceInfo> spaces;
  const auto new_space = [&](std::size_t width) {
    spaces.push_back({width, false, false, {}, {}});
    return sets.make();
  };

  std::map<std::string, std::vector<detail::Segment>> layout;
  for (auto idx : topological_order(g)) {
    const auto& l = g.layers[idx];
    std::vector<detail::Segment> in_layout;
    if (!l.inputs.empty()) in_layout = layout.at(l.inputs.front());
    const auto attach = [&](ChannelRole role, const std::vector<detail::Segment>& segs) {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < segs.size(); ++k) {
        spaces[segs[k].space].members.push_back({idx, {l.id, role, offset, offset + segs[k].width, k, segs.size()}});
        offset += segs[k].width;
      }
    };
    std::vector<detail::Segment> out;
    switch (l.kind) {
      case LayerKind::input: {
        const auto sp = new_space(static_cast<std::size_t>(l.channels));
        spaces[sp].pinned = true;
        out = {{sp, static_cast<std::size_t>(l.channels)}};
        break;
      }
      case LayerKind::conv2d:
        if (l.is_depthwise()) {
          attach(ChannelRole::out_channels, in_layout);
          out = in_layout;
          break;
        }
        if (l.groups != 1)
          throw UnsupportedPattern("layer '" + l.id + "': grouped convolution with groups=" +
                                   std::to_string(l.groups) + " is neither dense nor depthwise");
        [[fallthrough]];
      case LayerKind::conv3d:
      case LayerKind::deconv3d: {
        attach(ChannelRole::in_channels, in_layout);
        const auto sp = new_space(static_cast<std::size_t>(l.cout));
        spaces[sp].members.push_back(
            {idx, {l.id, ChannelRole::out_channels, 0, static_cast<std::size_t>(l.cout), 0, 1}});
        out = {{sp, static_cast<std::size_t>(l.cout)}};
        break;
      }
      case LayerKind::affine:
      case LayerKind::attention_gate:
        attach(ChannelRole::out_channels, in_layout);
        out = in_layout;
        break;
      case LayerKind::add: {
        for (std::size_t k = 1; k < l.inputs.size(); ++k) {
          const auto& other = layout.at(l.inputs[k]);
          if (other.size() != in_layout.size())
            throw UnsupportedPattern("layer '" + l.id + "': add operands have different channel segmentations");
          for (std::size_t s = 0; s < other.size(); ++s) {
            if (other[s].width != in_layout[s].width)
              throw UnsupportedPattern("layer '" + l.id + "': add operands have different channel segmentations");
            sets.unite(other[s].space, in_layout[s].space);
            spaces[other[s].space].merged_by_add = spaces[in_layout[s].space].merged_by_add = true;
          }
        }
        out = in_layout;
        break;
      }
      case LayerKind::concat:
        for (const auto& name : l.inputs) {
          const auto& part = layout.at(name);
          out.insert(out.end(), part.begin(), part.end());
        }
        break;
      case LayerKind::output:
        for (const auto& s : in_layout) spaces[s.space].pinned = true;
        out = in_layout;
        break;
      case LayerKind::activation:
      case LayerKind::softmax:
      case LayerKind::pool_gap:
        out = in_layout;
        break;
    }
    const bool carrier = l.kind == LayerKind::activation || l.kind == LayerKind::softmax ||
                         l.kind == LayerKind::pool_gap || l.kind == LayerKind::add ||
                         l.kind == LayerKind::concat || l.kind == LayerKind::output;
    if (carrier)
      for (const auto& s : out)
        if (spaces[s.space].carriers.empty() || spaces[s.space].carriers.back() != idx)
          spaces[s.space].carriers.push_back(idx);
    layout[l.id] = std::move(out);
  }

  // Collect classes keyed by their root.
  std::map<std::size_t, std::vector<std::size_t>> classes;
  for (std::size_t s = 0; s < spaces.size(); ++s) classes[sets.find(s)].push_back(s);

  std::map<std::string, int> in_width;
  for (const auto& l : g.layers)
    if (l.kind == LayerKind::conv2d || l.kind == LayerKind::conv3d || l.kind == LayerKind::deconv3d)
      in_width[l.id] = l.cin;

  std::vector<std::pair<std::size_t, ChannelGroup>> groups;
  for (const auto& [root, members_of] : classes) {
    bool pinned = false, by_add = false;
    for (auto s : members_of) {
      pinned = pinned || spaces[s].pinned;
      by_add = by_add || spaces[s].merged_by_add;
    }
    if (pinned) continue;
    std::vector<std::pair<std::size_t, GroupMember>> all;
    std::vector<std::size_t> carriers;
    for (auto s : members_of) {
      all.insert(all.end(), spaces[s].members.begin(), spaces[s].members.end());
      carriers.insert(carriers.end(), spaces[s].carriers.begin(), spaces[s].carriers.end());
    }
    std::sort(carriers.begin(), carriers.end());
    carriers.erase(std::unique(carriers.begin(), carriers.end()), carriers.end());
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      return std::tie(a.first, a.second.role, a.second.begin) < std::tie(b.first, b.second.role, b.second.begin);
    });
    all.erase(std::unique(all.begin(), all.end()), all.end());

    ChannelGroup group;
    group.width = spaces[members_of.front()].width;
    bool depthwise = false, sliced = false;
    std::size_t anchor_index = g.layers.size();
    for (const auto& [li, m] : all) {
      const auto& l = g.layers[li];
      if (l.is_depthwise()) depthwise = true;
      if (m.role == ChannelRole::in_channels && static_cast<int>(m.width()) != in_width[m.layer]) sliced = true;
      if (m.role == ChannelRole::out_channels && !l.is_depthwise() &&
          (l.kind == LayerKind::conv2d || l.kind == LayerKind::conv3d || l.kind == LayerKind::deconv3d) &&
          li < anchor_index) {
        anchor_index = li;
        group.anchor = l.id;
      }
      group.members.push_back(m);
    }
    for (auto ci : carriers) group.carriers.push_back(g.layers[ci].id);
    group.cause = by_add      ? GroupCause::residual_add
                  : depthwise ? GroupCause::depthwise_tie
                  : sliced    ? GroupCause::concat_slice
                              : GroupCause::producer_consumer;
    groups.emplace_back(anchor_index, std::move(group));
  }
  std::stable_sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<ChannelGroup> out;
  for (auto& [_, grp] : groups) out.push_back(std::move(grp));
  return out;
}

}  // namespace rtbev
