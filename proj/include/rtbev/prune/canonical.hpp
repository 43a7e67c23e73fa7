#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "rtbev/graph/dependency.hpp"
#include "rtbev/graph/graph.hpp"

namespace rtbev {

/// Node- and edge-labelled directed graph.
struct LabeledDigraph {
  struct Edge {
    std::size_t from;
    std::size_t to;
    int label;
    auto operator<=>(const Edge&) const = default;
  };
  std::vector<std::string> labels;
  std::vector<Edge> edges;
};

namespace detail {

class Canonizer {
 public:
  explicit Canonizer(const LabeledDigraph& g) : g_(g), in_(g.labels.size()), out_(g.labels.size()) {
    for (const auto& e : g.edges) {
      out_[e.from].push_back({e.label, e.to});
      in_[e.to].push_back({e.label, e.from});
    }
  }

  std::string run() {
    std::vector<std::string> sorted = g_.labels;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<std::size_t> colors(g_.labels.size());
    for (std::size_t v = 0; v < colors.size(); ++v)
      colors[v] = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), g_.labels[v]) - sorted.begin());
    best_.clear();
    have_best_ = false;
    search(colors);
    return best_;
  }

 private:
  using Signature = std::tuple<std::size_t, std::vector<std::pair<int, std::size_t>>,
                               std::vector<std::pair<int, std::size_t>>>;

  // Colours are kept as ranks of an ordered partition, so refinement only
  // ever splits cells and never reorders them.
  void refine(std::vector<std::size_t>& colors) const {
    std::size_t cells = std::set<std::size_t>(colors.begin(), colors.end()).size();
    while (true) {
      std::vector<Signature> sig(colors.size());
      for (std::size_t v = 0; v < colors.size(); ++v) {
        auto& [own, ins, outs] = sig[v];
        own = colors[v];
        for (const auto& [lab, u] : in_[v]) ins.emplace_back(lab, colors[u]);
        for (const auto& [lab, w] : out_[v]) outs.emplace_back(lab, colors[w]);
        std::sort(ins.begin(), ins.end());
        std::sort(outs.begin(), outs.end());
      }
      std::vector<Signature> uniq = sig;
      std::sort(uniq.begin(), uniq.end());
      uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
      for (std::size_t v = 0; v < colors.size(); ++v)
        colors[v] = static_cast<std::size_t>(std::lower_bound(uniq.begin(), uniq.end(), sig[v]) - uniq.begin());
      if (uniq.size() == cells) return;
      cells = uniq.size();
    }
  }

  std::string encode(const std::vector<std::size_t>& position) const {
    const std::size_t n = position.size();
    std::vector<std::string> ordered(n);
    for (std::size_t v = 0; v < n; ++v) ordered[position[v]] = g_.labels[v];
    std::vector<LabeledDigraph::Edge> edges;
    for (const auto& e : g_.edges) edges.push_back({position[e.from], position[e.to], e.label});
    std::sort(edges.begin(), edges.end());
    std::ostringstream os;
    os << n << ':';
    for (const auto& s : ordered) os << s << ';';
    os << '|';
    for (const auto& e : edges) os << e.from << '>' << e.to << '/' << e.label << ';';
    return os.str();
  }

  void search(std::vector<std::size_t> colors) {
    refine(colors);
    std::vector<std::size_t> count(colors.size() + 1, 0);
    for (auto c : colors) ++count[c];
    std::size_t target = colors.size();
    for (std::size_t c = 0; c < count.size(); ++c)
      if (count[c] > 1) {
        target = c;
        break;
      }
    if (target == colors.size()) {
      auto s = encode(colors);
      if (!have_best_ || s < best_) {
        best_ = std::move(s);
        have_best_ = true;
      }
      return;
    }
    for (std::size_t v = 0; v < colors.size(); ++v) {
      if (colors[v] != target) continue;
      auto next = colors;
      for (std::size_t u = 0; u < next.size(); ++u)
        if (next[u] > target || (next[u] == target && u != v)) ++next[u];
      search(std::move(next));
    }
  }

  const LabeledDigraph& g_;
  std::vector<std::vector<std::pair<int, std::size_t>>> in_, out_;
  std::string best_;
  bool have_best_ = false;
};

inline std::string layer_label(const LayerSpec& l) {
  std::ostringstream os;
  os << to_string(l.kind);
  switch (l.kind) {
    case LayerKind::conv2d:
      os << " k" << l.kernel << " s" << l.stride << " p" << l.pad << (l.is_depthwise() ? " dw" : "")
         << (l.bias ? " b" : "");
      break;
    case LayerKind::conv3d:
      os << " k" << l.kernel << " s" << l.stride << " p" << l.pad << (l.bias ? " b" : "");
      break;
    case LayerKind::deconv3d:
      os << (l.bias ? " b" : "");
      break;
    case LayerKind::activation:
      os << ' ' << to_string(l.fn);
      break;
    case LayerKind::softmax:
      os << " axis" << l.axis;
      break;
    case LayerKind::add:
    case LayerKind::concat:
      os << " n" << l.inputs.size();
      break;
    default:
      break;
  }
  return os.str();
}

}  // namespace detail

/// Smallest encoding over all vertex orderings consistent with
/// individualisation and refinement; equal for isomorphic graphs.
inline std::string canonical_form(const LabeledDigraph& g) { return detail::Canonizer(g).run(); }

/// The group's neighbourhood with channel widths and layer names erased:
/// every member or carrier layer becomes a vertex labelled by its kind,
/// width-free attributes and its roles in the group, and data-flow edges
/// between those layers keep their input position.
inline LabeledDigraph local_structure(const NetworkGraph& g, const ChannelGroup& group) {
  std::map<std::string, std::vector<std::string>> roles;
  for (const auto& m : group.members) {
    std::ostringstream os;
    os << to_string(m.role) << '[' << m.slot << '/' << m.slots << ']';
    roles[m.layer].push_back(os.str());
  }
  for (const auto& c : group.carriers) roles[c];
  LabeledDigraph out;
  std::map<std::string, std::size_t> vertex;
  for (const auto& l : g.layers) {
    auto it = roles.find(l.id);
    if (it == roles.end()) continue;
    auto tags = it->second;
    std::sort(tags.begin(), tags.end());
    std::string label = detail::layer_label(l);
    for (const auto& t : tags) label += ' ' + t;
    vertex[l.id] = out.labels.size();
    out.labels.push_back(std::move(label));
  }
  for (const auto& l : g.layers) {
    auto to = vertex.find(l.id);
    if (to == vertex.end()) continue;
    for (std::size_t k = 0; k < l.inputs.size(); ++k) {
      auto from = vertex.find(l.inputs[k]);
      if (from == vertex.end()) continue;
      const int label = l.kind == LayerKind::concat ? static_cast<int>(k) : 0;
      out.edges.push_back({from->second, to->second, label});
    }
  }
  return out;
}

inline std::string structural_signature(const NetworkGraph& g, const ChannelGroup& group) {
  return canonical_form(local_structure(g, group));
}

struct IsomorphismClass {
  std::string signature;
  std::vector<std::size_t> groups;  // indices into the group list
};

/// Buckets groups by signature, classes ordered by their first group.
inline std::vector<IsomorphismClass> isomorphism_classes(const NetworkGraph& g, const std::vector<ChannelGroup>& groups) {
  std::vector<IsomorphismClass> classes;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    auto sig = structural_signature(g, groups[i]);
    auto [it, fresh] = index.try_emplace(sig, classes.size());
    if (fresh) classes.push_back({sig, {}});
    classes[it->second].groups.push_back(i);
  }
  return classes;
}

}  // namespace rtbev
