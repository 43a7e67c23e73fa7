#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "rtbev/prune/pruner.hpp"

namespace rtbev {

inline nlohmann::json to_json(const ChannelGroup& g) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : g.members)
    members.push_back({{"layer", m.layer}, {"role", to_string(m.role)}, {"begin", m.begin}, {"end", m.end}});
  return {{"anchor", g.anchor}, {"cause", to_string(g.cause)}, {"width", g.width}, {"members", members}};
}

/// Classes with their groups' scores, the removed indices per group and the
/// achieved reductions.
inline nlohmann::json prune_report_json(const NetworkGraph& original, const PruneResult& result,
                                        double requested_ratio, BudgetTarget target) {
  const auto groups = build_dependency_groups(original);
  const auto scores = score_groups(original, groups);
  const auto classes = isomorphism_classes(original, groups);
  nlohmann::json cls_json = nlohmann::json::array();
  for (const auto& cls : classes) {
    nlohmann::json members = nlohmann::json::array();
    for (auto gi : cls.groups) {
      auto entry = to_json(groups[gi]);
      entry["scores"] = scores[gi].per_channel;
      members.push_back(std::move(entry));
    }
    cls_json.push_back({{"signature", cls.signature}, {"groups", members}});
  }
  nlohmann::json removed = nlohmann::json::array();
  for (const auto& sel : result.removed)
    removed.push_back({{"anchor", sel.group.anchor}, {"channels", sel.channels}});
  return {
      {"requested_ratio", requested_ratio},
      {"target", target == BudgetTarget::params ? "params" : "flops"},
      {"classes", cls_json},
      {"removed", removed},
      {"achieved", {{"param_reduction", result.param_reduction}, {"flop_reduction", result.flop_reduction}}},
  };
}

}  // namespace rtbev
