#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rtbev/graph/graph.hpp"
#include "rtbev/graph/validate.hpp"

namespace rtbev {

struct LayerCost {
  std::string id;
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
};

struct CostReport {
  std::uint64_t total_flops = 0;
  std::uint64_t total_params = 0;
  std::vector<LayerCost> per_layer;
};

inline std::uint64_t layer_params(const LayerSpec& l) {
  std::uint64_t n = 0;
  for (const auto& slot : weight_slots(l)) n += shape_numel(slot.shape);
  return n;
}

/// Symbolic shape propagation plus FLOP rules (multiply-accumulate = 2):
/// convolutions and deconvolutions count every kernel tap, affine counts one
/// MAC per element, the gate counts its two dense layers, everything else is
/// free. `input_shapes` maps input stream names to full tensor shapes.
inline CostReport analytic_cost(const NetworkGraph& g, const std::map<std::string, Shape>& input_shapes) {
  require_valid(g, false);
  CostReport report;
  std::map<std::string, Shape> shapes;
  for (auto idx : topological_order(g)) {
    const auto& l = g.layers[idx];
    LayerCost cost{l.id, 0, layer_params(l)};
    Shape out;
    try {
      const Shape* in = l.inputs.empty() ? nullptr : &shapes.at(l.inputs.front());
      const auto spatial_conv = [&](std::size_t rank) {
        if (in->size() != rank)
          throw ShapeError("expects rank " + std::to_string(rank) + " input, got " + shape_string(*in));
        out = *in;
        out[1] = static_cast<std::size_t>(l.cout);
        for (std::size_t a = 2; a < rank; ++a)
          out[a] = detail::conv_extent((*in)[a], l.kernel, l.stride, l.pad, "spatial");
        const std::uint64_t taps = rank == 4 ? 1ull * l.kernel * l.kernel : 1ull * l.kernel * l.kernel * l.kernel;
        cost.flops = 2ull * shape_numel(out) * (static_cast<std::uint64_t>(l.cin) / l.groups) * taps;
      };
      switch (l.kind) {
        case LayerKind::input: {
          auto it = input_shapes.find(l.stream_name());
          if (it == input_shapes.end())
            throw ValidationError("no input shape for stream '" + l.stream_name() + "'");
          out = it->second;
          if (out.size() < 2 || out[1] != static_cast<std::size_t>(l.channels))
            throw ShapeError("input shape " + shape_string(out) + " does not carry " + std::to_string(l.channels) +
                             " channels");
          break;
        }
        case LayerKind::conv2d: spatial_conv(4); break;
        case LayerKind::conv3d: spatial_conv(5); break;
        case LayerKind::deconv3d:
          if (in->size() != 5) throw ShapeError("deconv3d expects rank 5 input");
          out = *in;
          out[1] = static_cast<std::size_t>(l.cout);
          for (std::size_t a = 2; a < 5; ++a) out[a] *= 2;
          cost.flops = 2ull * shape_numel(*in) * static_cast<std::uint64_t>(l.cout) * 64;
          break;
        case LayerKind::affine:
          out = *in;
          cost.flops = 2ull * shape_numel(out);
          break;
        case LayerKind::attention_gate:
          out = *in;
          cost.flops = 4ull * (*in)[0] * static_cast<std::uint64_t>(l.channels) * l.hidden;
          break;
        case LayerKind::pool_gap:
          out = {(*in)[0], (*in)[1]};
          break;
        case LayerKind::add:
          out = *in;
          for (const auto& name : l.inputs)
            if (shapes.at(name) != out) throw ShapeError("add operands differ in shape");
          break;
        case LayerKind::concat: {
          out = *in;
          out[1] = 0;
          for (const auto& name : l.inputs) {
            const Shape& s = shapes.at(name);
            if (s.size() != in->size()) throw ShapeError("concat operand rank mismatch");
            for (std::size_t a = 0; a < s.size(); ++a)
              if (a != 1 && s[a] != (*in)[a]) throw ShapeError("concat operand dims mismatch");
            out[1] += s[1];
          }
          break;
        }
        default:
          out = *in;
          break;
      }
    } catch (const ShapeError& e) {
      throw ValidationError("layer '" + l.id + "': shapes do not propagate: " + e.what());
    }
    shapes[l.id] = std::move(out);
    report.total_flops += cost.flops;
    report.total_params += cost.params;
    report.per_layer.push_back(std::move(cost));
  }
  return report;
}

}  // namespace rtbev
