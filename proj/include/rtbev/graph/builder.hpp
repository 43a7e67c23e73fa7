#pragma once

#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "rtbev/graph/graph.hpp"

namespace rtbev {

/// Appends layers to a graph and returns the new layer's id so calls chain.
class GraphBuilder {
 public:
  std::string input(std::string id, int channels, std::string stream = {}) {
    LayerSpec l = base(std::move(id), LayerKind::input, {});
    l.channels = channels;
    l.stream = std::move(stream);
    return push(std::move(l));
  }

  std::string conv2d(std::string id, const std::string& in, int cin, int cout, int kernel, int stride = 1,
                     int pad = 0, int groups = 1, bool bias = true) {
    LayerSpec l = base(std::move(id), LayerKind::conv2d, {in});
    set_conv(l, cin, cout, kernel, stride, pad, bias);
    l.groups = groups;
    return push(std::move(l));
  }

  std::string conv3d(std::string id, const std::string& in, int cin, int cout, int kernel, int stride = 1,
                     int pad = 0, bool bias = true) {
    LayerSpec l = base(std::move(id), LayerKind::conv3d, {in});
    set_conv(l, cin, cout, kernel, stride, pad, bias);
    return push(std::move(l));
  }

  std::string deconv3d(std::string id, const std::string& in, int cin, int cout, bool bias = true) {
    LayerSpec l = base(std::move(id), LayerKind::deconv3d, {in});
    set_conv(l, cin, cout, 4, 2, 1, bias);
    return push(std::move(l));
  }

  std::string affine(std::string id, const std::string& in, int channels) {
    LayerSpec l = base(std::move(id), LayerKind::affine, {in});
    l.channels = channels;
    return push(std::move(l));
  }

  std::string activation(std::string id, const std::string& in, Activation fn = Activation::relu) {
    LayerSpec l = base(std::move(id), LayerKind::activation, {in});
    l.fn = fn;
    return push(std::move(l));
  }

  std::string gate(std::string id, const std::string& in, int channels, int hidden) {
    LayerSpec l = base(std::move(id), LayerKind::attention_gate, {in});
    l.channels = channels;
    l.hidden = hidden;
    return push(std::move(l));
  }

  std::string add(std::string id, std::vector<std::string> ins) {
    return push(base(std::move(id), LayerKind::add, std::move(ins)));
  }

  std::string concat(std::string id, std::vector<std::string> ins) {
    return push(base(std::move(id), LayerKind::concat, std::move(ins)));
  }

  std::string pool(std::string id, const std::string& in) { return push(base(std::move(id), LayerKind::pool_gap, {in})); }

  std::string softmax(std::string id, const std::string& in, int axis) {
    LayerSpec l = base(std::move(id), LayerKind::softmax, {in});
    l.axis = axis;
    return push(std::move(l));
  }

  std::string output(std::string id, const std::string& in, std::string stream = {}) {
    LayerSpec l = base(std::move(id), LayerKind::output, {in});
    l.stream = std::move(stream);
    return push(std::move(l));
  }

  void meta(const std::string& key, const std::string& value) { graph_.metadata[key] = value; }

  NetworkGraph& graph() { return graph_; }
  NetworkGraph build() && { return std::move(graph_); }

 private:
  static LayerSpec base(std::string id, LayerKind kind, std::vector<std::string> inputs) {
    LayerSpec l;
    l.id = std::move(id);
    l.kind = kind;
    l.inputs = std::move(inputs);
    return l;
  }

  static void set_conv(LayerSpec& l, int cin, int cout, int kernel, int stride, int pad, bool bias) {
    l.cin = cin;
    l.cout = cout;
    l.kernel = kernel;
    l.stride = stride;
    l.pad = pad;
    l.bias = bias;
  }

  std::string push(LayerSpec l) {
    std::string id = l.id;
    graph_.layers.push_back(std::move(l));
    return id;
  }

  NetworkGraph graph_;
};

}  // namespace rtbev
