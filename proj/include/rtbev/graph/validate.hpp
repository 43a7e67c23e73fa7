#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rtbev/graph/graph.hpp"

namespace rtbev {

enum class ViolationKind {
  duplicate_id,
  dangling_input,
  arity,
  cycle,
  channel_mismatch,
  bad_attribute,
  stream,
  missing_weight,
  weight_shape,
  orphan_weight,
};

struct Violation {
  ViolationKind kind;
  std::string layer;
  std::string message;
};

namespace detail {

// Strongly connected components that contain a cycle (size > 1, or a
// self-loop). Tarjan's algorithm over the input edges.
inline std::vector<std::vector<std::size_t>> cyclic_components(const NetworkGraph& g,
                                                               const std::map<std::string, std::size_t>& index) {
  const std::size_t n = g.layers.size();
  std::vector<std::vector<std::size_t>> preds(n);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& in : g.layers[i].inputs)
      if (auto it = index.find(in); it != index.end()) preds[i].push_back(it->second);

  std::vector<int> idx(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> result;
  int counter = 0;
  std::function<void(std::size_t)> strongconnect = [&](std::size_t v) {
    idx[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (auto w : preds[v]) {
      if (idx[w] < 0) {
        strongconnect(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], idx[w]);
      }
    }
    if (low[v] == idx[v]) {
      std::vector<std::size_t> comp;
      std::size_t w = 0;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp.push_back(w);
      } while (w != v);
      const bool self_loop = std::find(preds[v].begin(), preds[v].end(), v) != preds[v].end();
      if (comp.size() > 1 || self_loop) {
        std::sort(comp.begin(), comp.end());
        result.push_back(std::move(comp));
      }
    }
  };
  for (std::size_t v = 0; v < n; ++v)
    if (idx[v] < 0) strongconnect(v);
  std::sort(result.begin(), result.end());
  return result;
}

}  // namespace detail

/// Every structural problem in `g`: acyclicity, channel arithmetic and, when
/// `check_weights` is set, presence and shape of each parameter tensor.
inline std::vector<Violation> validate_graph(const NetworkGraph& g, bool check_weights = true) {
  std::vector<Violation> out;
  const auto report = [&](ViolationKind k, const std::string& layer, std::string msg) {
    out.push_back({k, layer, std::move(msg)});
  };

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    if (!index.emplace(g.layers[i].id, i).second)
      report(ViolationKind::duplicate_id, g.layers[i].id, "duplicate layer id");
  }
  std::vector<bool> dangling(g.layers.size(), false);
  for (std::size_t i = 0; i < g.layers.size(); ++i)
    for (const auto& in : g.layers[i].inputs)
      if (!index.count(in)) {
        report(ViolationKind::dangling_input, g.layers[i].id, "references undefined layer '" + in + "'");
        dangling[i] = true;
      }

  for (const auto& comp : detail::cyclic_components(g, index)) {
    std::string names;
    for (auto i : comp) names += (names.empty() ? "" : ",") + g.layers[i].id;
    report(ViolationKind::cycle, g.layers[comp.front()].id, "cycle through {" + names + "}");
  }

  std::set<std::string> in_streams, out_streams;
  for (const auto& l : g.layers) {
    const std::size_t arity = l.inputs.size();
    bool ok = true;
    switch (l.kind) {
      case LayerKind::input: ok = arity == 0; break;
      case LayerKind::add:
      case LayerKind::concat: ok = arity >= 2; break;
      default: ok = arity == 1; break;
    }
    if (!ok) report(ViolationKind::arity, l.id, "wrong number of inputs (" + std::to_string(arity) + ")");
    if (l.kind == LayerKind::input && !in_streams.insert(l.stream_name()).second)
      report(ViolationKind::stream, l.id, "duplicate input stream '" + l.stream_name() + "'");
    if (l.kind == LayerKind::output && !out_streams.insert(l.stream_name()).second)
      report(ViolationKind::stream, l.id, "duplicate output stream '" + l.stream_name() + "'");
  }

  // Channel propagation over the acyclic, fully-resolved part of the graph.
  std::map<std::string, int> channels;
  const auto attr = [&](const LayerSpec& l, bool cond, const std::string& what) {
    if (!cond) report(ViolationKind::bad_attribute, l.id, what);
    return cond;
  };
  std::vector<bool> done(g.layers.size(), false);
  bool progress = true;
  while (progress) {
    progress = false;
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
      if (done[i] || dangling[i]) continue;
      const auto& l = g.layers[i];
      std::vector<int> in_ch;
      bool ready = true;
      for (const auto& in : l.inputs) {
        auto it = channels.find(in);
        if (it == channels.end()) {
          ready = false;
          break;
        }
        in_ch.push_back(it->second);
      }
      if (!ready) continue;
      done[i] = true;
      progress = true;
      const int first = in_ch.empty() ? 0 : in_ch.front();
      const auto expect_in = [&](int declared) {
        if (!in_ch.empty() && first != declared)
          report(ViolationKind::channel_mismatch, l.id,
                 "expects " + std::to_string(declared) + " input channels, producer '" + l.inputs.front() +
                     "' gives " + std::to_string(first));
      };
      int result = first;
      switch (l.kind) {
        case LayerKind::input:
          attr(l, l.channels > 0, "input channels must be positive");
          result = l.channels;
          break;
        case LayerKind::conv2d:
        case LayerKind::conv3d:
          attr(l, l.cin > 0 && l.cout > 0, "channel counts must be positive");
          attr(l, l.kernel > 0 && l.stride >= 1 && l.pad >= 0, "kernel/stride/pad out of range");
          if (l.kind == LayerKind::conv3d) attr(l, l.groups == 1, "conv3d requires groups=1");
          if (attr(l, l.groups >= 1, "groups must be >= 1") && l.cin > 0 && l.cout > 0)
            attr(l, l.cin % l.groups == 0 && l.cout % l.groups == 0, "channels not divisible by groups");
          expect_in(l.cin);
          result = l.cout;
          break;
        case LayerKind::deconv3d:
          attr(l, l.cin > 0 && l.cout > 0, "channel counts must be positive");
          attr(l, l.kernel == 4 && l.stride == 2 && l.pad == 1, "deconv3d geometry is fixed at k4 s2 p1");
          expect_in(l.cin);
          result = l.cout;
          break;
        case LayerKind::affine:
          attr(l, l.channels > 0, "channels must be positive");
          expect_in(l.channels);
          result = l.channels;
          break;
        case LayerKind::attention_gate:
          attr(l, l.channels > 0 && l.hidden > 0, "channels and hidden must be positive");
          expect_in(l.channels);
          result = l.channels;
          break;
        case LayerKind::add:
          for (std::size_t k = 1; k < in_ch.size(); ++k)
            if (in_ch[k] != first)
              report(ViolationKind::channel_mismatch, l.id,
                     "add operands have " + std::to_string(first) + " and " + std::to_string(in_ch[k]) +
                         " channels");
          break;
        case LayerKind::concat:
          result = 0;
          for (int c : in_ch) result += c;
          break;
        case LayerKind::softmax:
          attr(l, l.axis >= -5 && l.axis <= 4, "softmax axis out of range");
          break;
        default:
          break;
      }
      channels[l.id] = result;
    }
  }

  if (check_weights) {
    std::set<std::string> expected;
    for (const auto& l : g.layers)
      for (const auto& slot : weight_slots(l)) {
        expected.insert(slot.name);
        auto it = g.weights.find(slot.name);
        if (it == g.weights.end()) {
          report(ViolationKind::missing_weight, l.id, "missing weight '" + slot.name + "'");
        } else if (it->second.shape() != slot.shape) {
          report(ViolationKind::weight_shape, l.id,
                 "weight '" + slot.name + "' has shape " + shape_string(it->second.shape()) + ", expected " +
                     shape_string(slot.shape));
        }
      }
    for (const auto& [name, t] : g.weights)
      if (!expected.count(name)) report(ViolationKind::orphan_weight, "", "weight '" + name + "' has no layer");
  }
  return out;
}

inline bool is_valid(const NetworkGraph& g, bool check_weights = true) {
  return validate_graph(g, check_weights).empty();
}

inline void require_valid(const NetworkGraph& g, bool check_weights = true) {
  const auto violations = validate_graph(g, check_weights);
  if (violations.empty()) return;
  std::string msg = "invalid graph:";
  for (const auto& v : violations) msg += "\n  [" + v.layer + "] " + v.message;
  throw ValidationError(msg);
}

/// Output channel count of every layer. Requires a valid graph.
inline std::map<std::string, int> output_channels(const NetworkGraph& g) {
  std::map<std::string, int> ch;
  for (auto i : topological_order(g)) {
    const auto& l = g.layers[i];
    switch (l.kind) {
      case LayerKind::input: ch[l.id] = l.channels; break;
      case LayerKind::conv2d:
      case LayerKind::conv3d:
      case LayerKind::deconv3d: ch[l.id] = l.cout; break;
      case LayerKind::affine:
      case LayerKind::attention_gate: ch[l.id] = l.channels; break;
      case LayerKind::concat: {
        int sum = 0;
        for (const auto& in : l.inputs) sum += ch.at(in);
        ch[l.id] = sum;
        break;
      }
      default: ch[l.id] = ch.at(l.inputs.front()); break;
    }
  }
  return ch;
}

}  // namespace rtbev
