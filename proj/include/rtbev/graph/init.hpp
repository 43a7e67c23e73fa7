#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "rtbev/graph/graph.hpp"

namespace rtbev {

/// Fills every parameter slot with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
/// draws, rounded to float so that weight blobs round-trip exactly. Affine
/// layers start as identity (scale 1, shift 0) plus the same small noise.
inline void initialize_weights(NetworkGraph& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  g.weights.clear();
  for (const auto& l : g.layers) {
    for (const auto& slot : weight_slots(l)) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(slot.fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      Tensor t(slot.shape);
      const bool is_scale = l.kind == LayerKind::affine && slot.name == l.id + ".weight";
      for (double& v : t.data()) {
        const double draw = dist(rng);
        v = static_cast<float>(is_scale ? 1.0 + 0.1 * draw : (l.kind == LayerKind::affine ? 0.1 * draw : draw));
      }
      g.weights.emplace(slot.name, std::move(t));
    }
  }
}

}  // namespace rtbev
