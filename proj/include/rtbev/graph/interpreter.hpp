#pragma once

#include <map>
#include <string>
#include <vector>

#include "rtbev/graph/graph.hpp"
#include "rtbev/graph/validate.hpp"
#include "rtbev/pipeline/attention.hpp"

namespace rtbev {

struct ExecutionResult {
  std::map<std::string, Tensor> outputs;  // keyed by output stream
  CostMeter meter;
};

namespace detail {

inline const Tensor& weight_of(const NetworkGraph& g, const std::string& name, Precision precision,
                               std::map<std::string, Tensor>& half_cache) {
  auto it = g.weights.find(name);
  if (it == g.weights.end()) throw MissingWeights("missing weight '" + name + "'");
  if (precision == Precision::full) return it->second;
  auto [cached, inserted] = half_cache.try_emplace(name);
  if (inserted) cached->second = quantize_half(it->second);
  return cached->second;
}

inline Tensor run_layer(const NetworkGraph& g, const LayerSpec& l, const std::vector<const Tensor*>& in,
                        Precision precision, std::map<std::string, Tensor>& half_cache, CostMeter& meter) {
  const auto w = [&](const std::string& suffix) -> const Tensor& {
    return weight_of(g, l.id + suffix, precision, half_cache);
  };
  switch (l.kind) {
    case LayerKind::conv2d:
      return conv2d(*in[0], w(".weight"), l.bias ? &w(".bias") : nullptr, {l.stride, l.pad, l.groups}, &meter);
    case LayerKind::conv3d:
      return conv3d(*in[0], w(".weight"), l.bias ? &w(".bias") : nullptr, {l.stride, l.pad, 1}, &meter);
    case LayerKind::deconv3d:
      return deconv3d_2x(*in[0], w(".weight"), l.bias ? &w(".bias") : nullptr, &meter);
    case LayerKind::affine:
      return affine_channel(*in[0], w(".weight").data(), w(".bias").data(), &meter);
    case LayerKind::activation:
      return activation(*in[0], l.fn);
    case LayerKind::pool_gap:
      return global_avg_pool(*in[0]);
    case LayerKind::softmax:
      return softmax_axis(*in[0], l.axis);
    case LayerKind::add:
      return add(in);
    case LayerKind::concat:
      return concat_channels(in);
    case LayerKind::attention_gate:
      return attention_gate(*in[0], {w(".fc1.weight"), w(".fc1.bias"), w(".fc2.weight"), w(".fc2.bias")}, &meter);
    case LayerKind::output:
      return *in[0];
    case LayerKind::input:
      break;
  }
  throw ValidationError("layer '" + l.id + "' cannot be executed");
}

}  // namespace detail

/// Evaluates `g` in topological order. Inputs are looked up in `feeds` by
/// stream name. In half mode the feeds, the weights and every layer result
/// are rounded through binary16.
inline ExecutionResult execute(const NetworkGraph& g, const std::map<std::string, Tensor>& feeds,
                               Precision precision = Precision::full) {
  ExecutionResult result;
  std::map<std::string, Tensor> values;
  std::map<std::string, Tensor> half_cache;
  std::map<std::string, std::size_t> remaining_uses;
  for (const auto& l : g.layers)
    for (const auto& in : l.inputs) ++remaining_uses[in];

  for (auto idx : topological_order(g)) {
    const auto& l = g.layers[idx];
    Tensor out;
    if (l.kind == LayerKind::input) {
      auto it = feeds.find(l.stream_name());
      if (it == feeds.end()) throw ValidationError("no feed for input stream '" + l.stream_name() + "'");
      if (it->second.rank() < 2 || it->second.dim(1) != static_cast<std::size_t>(l.channels))
        throw ShapeError("layer '" + l.id + "': feed shape " + shape_string(it->second.shape()) +
                         " does not carry " + std::to_string(l.channels) + " channels");
      out = it->second;
    } else {
      std::vector<const Tensor*> in;
      for (const auto& name : l.inputs) in.push_back(&values.at(name));
      try {
        out = detail::run_layer(g, l, in, precision, half_cache, result.meter);
      } catch (const ShapeError& e) {
        throw ShapeError("layer '" + l.id + "': " + e.what());
      }
      for (const auto& name : l.inputs)
        if (--remaining_uses[name] == 0 && !(g.find(name)->kind == LayerKind::output)) values.erase(name);
    }
    if (precision == Precision::half) out = quantize_half(out);
    if (l.kind == LayerKind::output) result.outputs[l.stream_name()] = out;
    values[l.id] = std::move(out);
  }
  return result;
}

}  // namespace rtbev
