#pragma once

#include <string>

#include "rtbev/core/ops.hpp"

namespace rtbev {

struct GateWeights {
  const Tensor& fc1_weight;  // [hidden, C]
  const Tensor& fc1_bias;    // [hidden]
  const Tensor& fc2_weight;  // [C, hidden]
  const Tensor& fc2_bias;    // [C]
};

/// Input-conditioned channel gating: s = sigmoid(W2 relu(W1 gap(x) + b1) + b2),
/// out[n, c, ...] = s[n, c] * x[n, c, ...]. The gates are recomputed from each
/// input, so the same weights scale different volumes differently.
inline Tensor attention_gate(const Tensor& volume, const GateWeights& gw, CostMeter* meter = nullptr) {
  if (volume.rank() < 3) throw ShapeError("attention_gate expects rank >= 3");
  const std::size_t n_batch = volume.dim(0), c = volume.dim(1);
  if (gw.fc1_weight.rank() != 2 || gw.fc1_weight.dim(1) != c)
    throw ShapeError("attention_gate fc1 weight " + shape_string(gw.fc1_weight.shape()) + " does not match C=" +
                     std::to_string(c));
  const std::size_t hidden = gw.fc1_weight.dim(0);
  if (gw.fc1_bias.shape() != Shape{hidden} || gw.fc2_weight.shape() != Shape{c, hidden} ||
      gw.fc2_bias.shape() != Shape{c})
    throw ShapeError("attention_gate MLP weights are inconsistent");

  const Tensor pooled = global_avg_pool(volume);
  std::vector<double> gate(n_batch * c);
  std::vector<double> h(hidden);
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t j = 0; j < hidden; ++j) {
      double acc = gw.fc1_bias[j];
      for (std::size_t ch = 0; ch < c; ++ch) acc += gw.fc1_weight[j * c + ch] * pooled[n * c + ch];
      h[j] = acc > 0.0 ? acc : 0.0;
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = gw.fc2_bias[ch];
      for (std::size_t j = 0; j < hidden; ++j) acc += gw.fc2_weight[ch * hidden + j] * h[j];
      gate[n * c + ch] = sigmoid(acc);
    }
  }
  Tensor out = volume;
  const std::size_t inner = volume.numel() / (n_batch * c);
  auto o = out.data();
  for (std::size_t nc = 0; nc < n_batch * c; ++nc)
    for (std::size_t i = 0; i < inner; ++i) o[nc * inner + i] *= gate[nc];
  if (meter) meter->add("attention_gate", 4ull * n_batch * c * hidden);
  return out;
}

}  // namespace rtbev
