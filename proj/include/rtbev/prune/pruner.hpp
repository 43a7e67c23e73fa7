#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "rtbev/core/errors.hpp"
#include "rtbev/core/tensor.hpp"
#include "rtbev/graph/cost.hpp"
#include "rtbev/graph/dependency.hpp"
#include "rtbev/graph/graph.hpp"
#include "rtbev/graph/validate.hpp"
#include "rtbev/prune/canonical.hpp"

namespace rtbev {

struct ImportanceScore {
  ChannelGroup group;
  std::vector<double> per_channel;
};

struct PruneSelection {
  ChannelGroup group;
  std::vector<std::size_t> channels;  // group-local indices, ascending
};

enum class BudgetTarget { params, flops };

struct PruneResult {
  NetworkGraph pruned_graph;
  std::vector<PruneSelection> removed;
  double param_reduction = 0.0;
  double flop_reduction = 0.0;
};

namespace detail {

struct CoupledSlice {
  std::string weight;
  std::size_t axis;
};

/// Weight tensors and axes that hold one channel of a member slice.
inline std::vector<CoupledSlice> coupled_slices(const LayerSpec& l, ChannelRole role) {
  const std::string w = l.id + ".weight", b = l.id + ".bias";
  std::vector<CoupledSlice> out;
  switch (l.kind) {
    case LayerKind::conv2d:
    case LayerKind::conv3d:
      if (role == ChannelRole::in_channels) return {{w, 1}};
      out.push_back({w, 0});
      if (l.bias) out.push_back({b, 0});
      return out;
    case LayerKind::deconv3d:
      if (role == ChannelRole::in_channels) return {{w, 0}};
      out.push_back({w, 1});
      if (l.bias) out.push_back({b, 0});
      return out;
    case LayerKind::affine:
      return {{w, 0}, {b, 0}};
    case LayerKind::attention_gate:
      return {{l.id + ".fc1.weight", 1}, {l.id + ".fc2.weight", 0}, {l.id + ".fc2.bias", 0}};
    default:
      return {};
  }
}

inline const Tensor& weight_of(const NetworkGraph& g, const std::string& name) {
  auto it = g.weights.find(name);
  if (it == g.weights.end()) throw MissingWeights("missing weight tensor '" + name + "'");
  return it->second;
}

/// Sum of squared entries at index `i` along `axis`.
inline double axis_sum_squares(const Tensor& t, std::size_t axis, std::size_t i) {
  const auto& s = t.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= s[a];
  for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
  const auto d = t.data();
  double acc = 0.0;
  for (std::size_t o = 0; o < outer; ++o) {
    const double* p = d.data() + (o * s[axis] + i) * inner;
    for (std::size_t k = 0; k < inner; ++k) acc += p[k] * p[k];
  }
  return acc;
}

inline Tensor drop_along(const Tensor& t, std::size_t axis, const std::set<std::size_t>& drop) {
  if (drop.empty()) return t;
  const auto& s = t.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= s[a];
  for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
  Shape ns = s;
  ns[axis] -= drop.size();
  std::vector<double> out;
  out.reserve(shape_numel(ns));
  const auto d = t.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < s[axis]; ++i) {
      if (drop.count(i)) continue;
      const double* p = d.data() + (o * s[axis] + i) * inner;
      out.insert(out.end(), p, p + inner);
    }
  Tensor r(ns, std::move(out));
  r.set_precision(t.precision());
  return r;
}

}  // namespace detail

/// Grouped L2 importance: for every channel of a group, the norm over all
/// weight entries coupled to it in any member layer.
inline std::vector<ImportanceScore> score_groups(const NetworkGraph& g, const std::vector<ChannelGroup>& groups) {
  std::vector<ImportanceScore> scores;
  for (const auto& grp : groups) {
    std::vector<double> sq(grp.width, 0.0);
    for (const auto& m : grp.members) {
      const auto& l = g.layer(m.layer);
      for (const auto& cs : detail::coupled_slices(l, m.role)) {
        const Tensor& t = detail::weight_of(g, cs.weight);
        for (std::size_t i = 0; i < grp.width; ++i) sq[i] += detail::axis_sum_squares(t, cs.axis, m.begin + i);
      }
    }
    for (auto& v : sq) v = std::sqrt(v);
    scores.push_back({grp, std::move(sq)});
  }
  return scores;
}

inline std::vector<ImportanceScore> score_groups(const NetworkGraph& g) {
  return score_groups(g, build_dependency_groups(g));
}

namespace detail {

inline std::size_t removal_quota(double ratio, std::size_t count) {
  // The small slack keeps fractions such as 1/3 of 3 from flooring to 0.
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(count) + 1e-9));
}

/// Lowest-scored channels of one class, honouring the survivor floor.
inline std::vector<std::pair<std::size_t, std::size_t>> select_in_class(const std::vector<ImportanceScore>& scores,
                                                                        const std::vector<std::size_t>& members,
                                                                        std::size_t quota) {
  struct Entry {
    double score;
    std::string anchor;
    std::size_t channel;
    std::size_t group;
  };
  std::vector<Entry> pool;
  std::map<std::size_t, std::size_t> remaining;
  for (auto gi : members) {
    const auto& s = scores.at(gi);
    remaining[gi] = s.per_channel.size();
    for (std::size_t c = 0; c < s.per_channel.size(); ++c) pool.push_back({s.per_channel[c], s.group.anchor, c, gi});
  }
  std::sort(pool.begin(), pool.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.score, a.anchor, a.channel, a.group) < std::tie(b.score, b.anchor, b.channel, b.group);
  });
  std::vector<std::pair<std::size_t, std::size_t>> picked;
  for (const auto& e : pool) {
    if (picked.size() == quota) break;
    if (remaining[e.group] <= 1) continue;
    --remaining[e.group];
    picked.emplace_back(e.group, e.channel);
  }
  return picked;
}

inline std::vector<PruneSelection> collect(const std::vector<ImportanceScore>& scores,
                                           const std::vector<std::pair<std::size_t, std::size_t>>& picked) {
  std::map<std::size_t, std::vector<std::size_t>> by_group;
  for (const auto& [gi, c] : picked) by_group[gi].push_back(c);
  std::vector<PruneSelection> out;
  for (auto& [gi, chans] : by_group) {
    std::sort(chans.begin(), chans.end());
    out.push_back({scores[gi].group, std::move(chans)});
  }
  return out;
}

}  // namespace detail

/// Ranks channels inside each isomorphism class and marks the lowest
/// floor(ratio * class channel count) of them. Class indices refer to
/// positions in `scores`.
inline std::vector<PruneSelection> select_prune_set(const std::vector<ImportanceScore>& scores,
                                                    const std::vector<IsomorphismClass>& classes, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw InvalidSelection("prune ratio must lie in [0, 1)");
  std::vector<std::pair<std::size_t, std::size_t>> picked;
  for (const auto& cls : classes) {
    std::size_t count = 0;
    for (auto gi : cls.groups) count += scores.at(gi).per_channel.size();
    const std::size_t quota = detail::removal_quota(ratio, count);
    if (quota > count - cls.groups.size())
      throw InfeasibleBudget("ratio " + std::to_string(ratio) + " needs " + std::to_string(quota) + " of " +
                             std::to_string(count) + " channels in class '" + cls.signature +
                             "', but every group keeps at least one");
    auto part = detail::select_in_class(scores, cls.groups, quota);
    picked.insert(picked.end(), part.begin(), part.end());
  }
  return detail::collect(scores, picked);
}

namespace detail {

using DropMap = std::map<std::pair<std::string, ChannelRole>, std::set<std::size_t>>;

/// Deletes original channel indices per (layer, role) and shrinks attrs.
inline NetworkGraph drop_channels(const NetworkGraph& g, const DropMap& drops) {
  NetworkGraph out = g;
  for (const auto& [key, idx] : drops) {
    if (idx.empty()) continue;
    const auto& [id, role] = key;
    LayerSpec* l = out.find(id);
    if (!l) throw InvalidSelection("selection names unknown layer '" + id + "'");
    const LayerSpec before = *l;
    for (const auto& cs : coupled_slices(before, role)) {
      auto it = out.weights.find(cs.weight);
      if (it != out.weights.end()) it->second = drop_along(it->second, cs.axis, idx);
    }
    const int r = static_cast<int>(idx.size());
    switch (l->kind) {
      case LayerKind::conv2d:
        if (before.is_depthwise()) {
          l->cin -= r;
          l->cout -= r;
          l->groups -= r;
          break;
        }
        [[fallthrough]];
      case LayerKind::conv3d:
      case LayerKind::deconv3d:
        (role == ChannelRole::in_channels ? l->cin : l->cout) -= r;
        break;
      case LayerKind::affine:
      case LayerKind::attention_gate:
        l->channels -= r;
        break;
      default:
        break;
    }
  }
  return out;
}

inline std::set<std::size_t> checked_channels(const std::vector<std::size_t>& channels, std::size_t width) {
  std::set<std::size_t> local(channels.begin(), channels.end());
  for (auto c : local)
    if (c >= width)
      throw InvalidSelection("channel " + std::to_string(c) + " outside group width " + std::to_string(width));
  if (!local.empty() && local.size() >= width) throw InvalidSelection("selection removes every channel of a group");
  return local;
}

}  // namespace detail

/// Removes `channels` from the listed members only. apply_prune passes every
/// member; passing a subset produces the partially sliced graphs that the
/// closure property is checked against.
inline NetworkGraph slice_members(const NetworkGraph& g, const ChannelGroup& group,
                                  const std::vector<GroupMember>& members, const std::vector<std::size_t>& channels) {
  const auto local = detail::checked_channels(channels, group.width);
  detail::DropMap drops;
  for (const auto& m : members)
    for (auto c : local) drops[{m.layer, m.role}].insert(m.begin + c);
  return detail::drop_channels(g, drops);
}

/// Removes the selected channels from every member of their groups. Drops
/// are gathered in original index space first so several groups touching
/// one layer compose correctly.
inline NetworkGraph apply_prune(const NetworkGraph& g, const std::vector<PruneSelection>& selection) {
  detail::DropMap drops;
  for (const auto& sel : selection) {
    const auto local = detail::checked_channels(sel.channels, sel.group.width);
    for (const auto& m : sel.group.members) {
      if (m.width() != sel.group.width)
        throw InvalidSelection("member '" + m.layer + "' slice width differs from its group width");
      for (auto c : local) drops[{m.layer, m.role}].insert(m.begin + c);
    }
  }
  return detail::drop_channels(g, drops);
}

inline double reduction(std::uint64_t before, std::uint64_t after) {
  if (before == 0) return 0.0;
  return static_cast<double>(before - std::min(before, after)) / static_cast<double>(before);
}

/// Step by which prune_to_budget raises the per-class fraction.
inline constexpr double kBudgetStep = 0.005;

/// Raises the per-class fraction in fixed steps until the analytic reduction
/// on `target` reaches `ratio`. Classes saturate at their survivor floor.
inline PruneResult prune_to_budget(const NetworkGraph& g, double ratio, BudgetTarget target,
                                   const std::map<std::string, Shape>& input_shapes) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw InvalidSelection("prune ratio must lie in [0, 1)");
  const CostReport base = analytic_cost(g, input_shapes);
  if (ratio == 0.0) return {g, {}, 0.0, 0.0};
  const auto groups = build_dependency_groups(g);
  const auto scores = score_groups(g, groups);
  const auto classes = isomorphism_classes(g, groups);

  for (int step = 1;; ++step) {
    const double f = std::min(step * kBudgetStep, 1.0);
    std::vector<std::pair<std::size_t, std::size_t>> picked;
    bool saturated = true;
    for (const auto& cls : classes) {
      std::size_t count = 0;
      for (auto gi : cls.groups) count += scores[gi].per_channel.size();
      const std::size_t ceiling = count - cls.groups.size();
      const std::size_t want = detail::removal_quota(f, count);
      if (want < ceiling) saturated = false;
      auto part = detail::select_in_class(scores, cls.groups, std::min(want, ceiling));
      picked.insert(picked.end(), part.begin(), part.end());
    }
    auto selection = detail::collect(scores, picked);
    NetworkGraph pruned = apply_prune(g, selection);
    const CostReport after = analytic_cost(pruned, input_shapes);
    PruneResult result{std::move(pruned), std::move(selection), reduction(base.total_params, after.total_params),
                       reduction(base.total_flops, after.total_flops)};
    const double achieved = target == BudgetTarget::params ? result.param_reduction : result.flop_reduction;
    if (achieved >= ratio) return result;
    if (saturated || f >= 1.0)
      throw InfeasibleBudget("reduction target " + std::to_string(ratio) + " unreachable; every class is at its " +
                             "survivor floor with reduction " + std::to_string(achieved));
  }
}

}  // namespace rtbev
