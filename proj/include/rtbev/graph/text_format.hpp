#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rtbev/graph/graph.hpp"

namespace rtbev {

// Line-oriented graph format:
//   # comment
//   @key=value                       (metadata)
//   <id> <kind> key=value ... inputs=a,b

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline int parse_int(std::string_view v, std::size_t line, std::string_view key) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ParseError(line, "attribute '" + std::string(key) + "' expects an integer, got '" + std::string(v) + "'");
  return out;
}

// Keys each kind accepts, in serialization order.
inline std::vector<std::string_view> kind_keys(LayerKind kind) {
  switch (kind) {
    case LayerKind::input: return {"stream", "channels"};
    case LayerKind::output: return {"stream"};
    case LayerKind::conv2d: return {"cin", "cout", "kernel", "stride", "pad", "groups", "bias"};
    case LayerKind::conv3d: return {"cin", "cout", "kernel", "stride", "pad", "bias"};
    case LayerKind::deconv3d: return {"cin", "cout", "kernel", "stride", "pad", "bias"};
    case LayerKind::affine: return {"channels"};
    case LayerKind::attention_gate: return {"channels", "hidden"};
    case LayerKind::activation: return {"fn"};
    case LayerKind::softmax: return {"axis"};
    default: return {};
  }
}

}  // namespace detail

inline NetworkGraph parse_graph(std::string_view text) {
  NetworkGraph g;
  std::map<std::string, std::size_t> defined_at;
  std::vector<std::size_t> line_of;
  std::size_t line_no = 0;
  for (const auto& raw : detail::split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '@') {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ParseError(line_no, "metadata line needs key=value");
      g.metadata[std::string(line.substr(1, eq - 1))] = std::string(line.substr(eq + 1));
      continue;
    }
    std::vector<std::string> tokens;
    std::istringstream ts{std::string(line)};
    for (std::string tok; ts >> tok;) tokens.push_back(tok);
    if (tokens.size() < 2) throw ParseError(line_no, "expected '<id> <kind> ...'");
    LayerSpec l;
    l.id = tokens[0];
    if (l.id.find_first_of("=,") != std::string::npos) throw ParseError(line_no, "invalid layer id '" + l.id + "'");
    const auto kind = parse_layer_kind(tokens[1]);
    if (!kind) throw ParseError(line_no, "unknown layer kind '" + tokens[1] + "'");
    l.kind = *kind;
    if (l.kind == LayerKind::deconv3d) {
      l.kernel = 4;
      l.stride = 2;
      l.pad = 1;
    }
    const auto allowed = detail::kind_keys(l.kind);
    std::set<std::string> seen;
    for (std::size_t t = 2; t < tokens.size(); ++t) {
      const auto eq = tokens[t].find('=');
      if (eq == std::string::npos) throw ParseError(line_no, "expected key=value, got '" + tokens[t] + "'");
      const std::string key = tokens[t].substr(0, eq);
      const std::string value = tokens[t].substr(eq + 1);
      if (!seen.insert(key).second) throw ParseError(line_no, "duplicate attribute '" + key + "'");
      if (key == "inputs") {
        if (!value.empty()) l.inputs = detail::split(value, ',');
        continue;
      }
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        throw ParseError(line_no, "attribute '" + key + "' not valid for " + std::string(to_string(l.kind)));
      if (key == "stream") {
        l.stream = value;
      } else if (key == "fn") {
        if (value == "relu") l.fn = Activation::relu;
        else if (value == "sigmoid") l.fn = Activation::sigmoid;
        else throw ParseError(line_no, "unknown activation '" + value + "'");
      } else {
        const int v = detail::parse_int(value, line_no, key);
        if (key == "cin") l.cin = v;
        else if (key == "cout") l.cout = v;
        else if (key == "channels") l.channels = v;
        else if (key == "kernel") l.kernel = v;
        else if (key == "stride") l.stride = v;
        else if (key == "pad") l.pad = v;
        else if (key == "groups") l.groups = v;
        else if (key == "bias") l.bias = v != 0;
        else if (key == "hidden") l.hidden = v;
        else if (key == "axis") l.axis = v;
      }
    }
    if (!defined_at.emplace(l.id, line_no).second)
      throw ParseError(line_no, "duplicate layer id '" + l.id + "'");
    line_of.push_back(line_no);
    g.layers.push_back(std::move(l));
  }
  for (std::size_t i = 0; i < g.layers.size(); ++i)
    for (const auto& in : g.layers[i].inputs)
      if (!defined_at.count(in))
        throw ParseError(line_of[i], "layer '" + g.layers[i].id + "' references undefined layer '" + in + "'");
  return g;
}

inline std::string serialize_graph(const NetworkGraph& g) {
  std::ostringstream os;
  for (const auto& [k, v] : g.metadata) os << '@' << k << '=' << v << '\n';
  for (const auto& l : g.layers) {
    os << l.id << ' ' << to_string(l.kind);
    for (auto key : detail::kind_keys(l.kind)) {
      if (key == "stream") {
        if (!l.stream.empty()) os << " stream=" << l.stream;
        continue;
      }
      os << ' ' << key << '=';
      if (key == "fn") os << to_string(l.fn);
      else if (key == "cin") os << l.cin;
      else if (key == "cout") os << l.cout;
      else if (key == "channels") os << l.channels;
      else if (key == "kernel") os << l.kernel;
      else if (key == "stride") os << l.stride;
      else if (key == "pad") os << l.pad;
      else if (key == "groups") os << l.groups;
      else if (key == "bias") os << (l.bias ? 1 : 0);
      else if (key == "hidden") os << l.hidden;
      else if (key == "axis") os << l.axis;
    }
    if (!l.inputs.empty()) {
      os << " inputs=";
      for (std::size_t i = 0; i < l.inputs.size(); ++i) os << (i ? "," : "") << l.inputs[i];
    }
    os << '\n';
  }
  return os.str();
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IOError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IOError("cannot open " + path + " for writing");
  os << text;
  if (!os) throw IOError("failed writing " + path);
}

/// Weights whose names start with one of the graph's layer ids.
inline WeightStore weights_for(const NetworkGraph& g, const WeightStore& pool) {
  WeightStore out;
  for (const auto& l : g.layers)
    for (const auto& slot : weight_slots(l))
      if (auto it = pool.find(slot.name); it != pool.end()) out.emplace(it->first, it->second);
  return out;
}

}  // namespace rtbev
