#pragma once

// Exhaustive labelled-digraph isomorphism by backtracking over all
// label-preserving vertex bijections.

#include <algorithm>
#include <map>
#include <tuple>
#include <vector>

#include "rtbev/prune/canonical.hpp"

namespace rtbev::oracle {

inline bool isomorphic(const LabeledDigraph& a, const LabeledDigraph& b) {
  const std::size_t n = a.labels.size();
  if (n != b.labels.size() || a.edges.size() != b.edges.size()) return false;
  std::map<std::tuple<std::size_t, std::size_t, int>, int> eb;
  for (const auto& e : b.edges) ++eb[{e.from, e.to, e.label}];
  std::vector<std::size_t> map(n, n);
  std::vector<bool> used(n, false);

  const auto consistent = [&](std::size_t placed) {
    // Every edge of `a` among the first `placed` vertices must appear in `b`
    // with the same multiplicity.
    std::map<std::tuple<std::size_t, std::size_t, int>, int> ea;
    for (const auto& e : a.edges)
      if (e.from < placed && e.to < placed) ++ea[{map[e.from], map[e.to], e.label}];
    for (const auto& [k, c] : ea) {
      auto it = eb.find(k);
      if (it == eb.end() || it->second != c) return false;
    }
    return true;
  };

  const auto rec = [&](auto&& self, std::size_t v) -> bool {
    if (v == n) {
      std::map<std::tuple<std::size_t, std::size_t, int>, int> ea;
      for (const auto& e : a.edges) ++ea[{map[e.from], map[e.to], e.label}];
      return ea == eb;
    }
    for (std::size_t w = 0; w < n; ++w) {
      if (used[w] || a.labels[v] != b.labels[w]) continue;
      used[w] = true;
      map[v] = w;
      if (consistent(v + 1) && self(self, v + 1)) return true;
      used[w] = false;
    }
    map[v] = n;
    return false;
  };
  return rec(rec, 0);
}

}  // namespace rtbev::oracle
