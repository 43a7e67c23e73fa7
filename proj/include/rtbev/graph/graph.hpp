#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rtbev/core/errors.hpp"
#include "rtbev/core/ops.hpp"
#include "rtbev/core/tensor.hpp"
#include "rtbev/core/weights_io.hpp"

namespace rtbev {

enum class LayerKind {
  conv2d,
  conv3d,
  deconv3d,
  affine,
  activation,
  pool_gap,
  softmax,
  add,
  concat,
  attention_gate,
  input,
  output,
};

inline constexpr std::pair<LayerKind, std::string_view> kLayerKindNames[] = {
    {LayerKind::conv2d, "conv2d"},   {LayerKind::conv3d, "conv3d"},
    {LayerKind::deconv3d, "deconv3d"}, {LayerKind::affine, "affine"},
    {LayerKind::activation, "activation"}, {LayerKind::pool_gap, "pool_gap"},
    {LayerKind::softmax, "softmax"}, {LayerKind::add, "add"},
    {LayerKind::concat, "concat"},   {LayerKind::attention_gate, "attention_gate"},
    {LayerKind::input, "input"},     {LayerKind::output, "output"},
};

inline std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kLayerKindNames)
    if (k == kind) return name;
  return "?";
}

inline std::optional<LayerKind> parse_layer_kind(std::string_view name) {
  for (const auto& [k, n] : kLayerKindNames)
    if (n == name) return k;
  return std::nullopt;
}

inline std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "sigmoid"; }

/// One node of a network. Which attributes are meaningful depends on `kind`:
///   input           stream, channels
///   output          stream
///   conv2d          cin, cout, kernel, stride, pad, groups, bias
///   conv3d          cin, cout, kernel, stride, pad, bias
///   deconv3d        cin, cout, bias (kernel 4, stride 2, pad 1)
///   affine          channels
///   attention_gate  channels, hidden
///   activation      fn
///   softmax         axis
struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::input;
  int cin = 0;
  int cout = 0;
  int channels = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  int groups = 1;
  bool bias = false;
  int hidden = 0;
  int axis = 1;
  Activation fn = Activation::relu;
  std::string stream;
  std::vector<std::string> inputs;

  bool operator==(const LayerSpec&) const = default;

  bool is_depthwise() const { return kind == LayerKind::conv2d && groups > 1 && groups == cin && cin == cout; }
  std::string stream_name() const { return stream.empty() ? id : stream; }
};

struct NetworkGraph {
  std::vector<LayerSpec> layers;
  WeightStore weights;
  std::map<std::string, std::string> metadata;

  bool operator==(const NetworkGraph&) const = default;

  const LayerSpec* find(std::string_view id) const {
    auto it = std::find_if(layers.begin(), layers.end(), [&](const LayerSpec& l) { return l.id == id; });
    return it == layers.end() ? nullptr : &*it;
  }
  LayerSpec* find(std::string_view id) {
    return const_cast<LayerSpec*>(static_cast<const NetworkGraph*>(this)->find(id));
  }
  const LayerSpec& layer(std::string_view id) const {
    if (const auto* l = find(id)) return *l;
    throw ValidationError("no layer named '" + std::string(id) + "'");
  }
  std::optional<std::size_t> index_of(std::string_view id) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].id == id) return i;
    return std::nullopt;
  }
  LayerSpec& add(LayerSpec spec) { return layers.emplace_back(std::move(spec)); }

  /// Ids of layers that read `id`, in layer order (repeats kept).
  std::vector<std::string> consumers(std::string_view id) const {
    std::vector<std::string> out;
    for (const auto& l : layers)
      for (const auto& in : l.inputs)
        if (in == id) out.push_back(l.id);
    return out;
  }
};

struct WeightSlot {
  std::string name;
  Shape shape;
  std::size_t fan_in = 1;
};

/// Parameter tensors a layer owns, named `<id>.weight`, `<id>.bias`, etc.
inline std::vector<WeightSlot> weight_slots(const LayerSpec& l) {
  const auto u = [](int v) { return static_cast<std::size_t>(std::max(v, 1)); };
  std::vector<WeightSlot> slots;
  switch (l.kind) {
    case LayerKind::conv2d: {
      const std::size_t cin_g = u(l.cin) / u(l.groups);
      const std::size_t fan = cin_g * u(l.kernel) * u(l.kernel);
      slots.push_back({l.id + ".weight", {u(l.cout), cin_g, u(l.kernel), u(l.kernel)}, fan});
      if (l.bias) slots.push_back({l.id + ".bias", {u(l.cout)}, fan});
      break;
    }
    case LayerKind::conv3d: {
      const std::size_t k = u(l.kernel);
      const std::size_t fan = u(l.cin) * k * k * k;
      slots.push_back({l.id + ".weight", {u(l.cout), u(l.cin), k, k, k}, fan});
      if (l.bias) slots.push_back({l.id + ".bias", {u(l.cout)}, fan});
      break;
    }
    case LayerKind::deconv3d: {
      const std::size_t fan = u(l.cin) * 8;  // each output sees 2x2x2 taps per input channel
      slots.push_back({l.id + ".weight", {u(l.cin), u(l.cout), 4, 4, 4}, fan});
      if (l.bias) slots.push_back({l.id + ".bias", {u(l.cout)}, fan});
      break;
    }
    case LayerKind::affine:
      slots.push_back({l.id + ".weight", {u(l.channels)}, 1});
      slots.push_back({l.id + ".bias", {u(l.channels)}, 1});
      break;
    case LayerKind::attention_gate:
      slots.push_back({l.id + ".fc1.weight", {u(l.hidden), u(l.channels)}, u(l.channels)});
      slots.push_back({l.id + ".fc1.bias", {u(l.hidden)}, u(l.channels)});
      slots.push_back({l.id + ".fc2.weight", {u(l.channels), u(l.hidden)}, u(l.hidden)});
      slots.push_back({l.id + ".fc2.bias", {u(l.channels)}, u(l.hidden)});
      break;
    default:
      break;
  }
  return slots;
}

/// Deterministic topological order: among ready layers, the earliest
/// declared goes first. Throws ValidationError on a cycle or dangling input.
inline std::vector<std::size_t> topological_order(const NetworkGraph& g) {
  const std::size_t n = g.layers.size();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index.emplace(g.layers[i].id, i);
  std::vector<std::size_t> indegree(n, 0);
  std::vector<std::vector<std::size_t>> succ(n);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& in : g.layers[i].inputs) {
      auto it = index.find(in);
      if (it == index.end())
        throw ValidationError("layer '" + g.layers[i].id + "' references undefined layer '" + in + "'");
      succ[it->second].push_back(i);
      ++indegree[i];
    }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push(i);
  std::vector<std::size_t> order;
  order.reserve(n);
  while (!ready.empty()) {
    const std::size_t i = ready.top();
    ready.pop();
    order.push_back(i);
    for (auto j : succ[i])
      if (--indegree[j] == 0) ready.push(j);
  }
  if (order.size() != n) throw ValidationError("graph contains a cycle");
  return order;
}

}  // namespace rtbev
