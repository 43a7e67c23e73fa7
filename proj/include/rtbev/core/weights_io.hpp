#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>

#include "rtbev/core/errors.hpp"
#include "rtbev/core/tensor.hpp"

namespace rtbev {

using WeightStore = std::map<std::string, Tensor>;

// Blob layout (all integers little-endian):
//   "RTBWGT01"
//   repeated until EOF: u32 name_len, name bytes, u32 rank, u32 dims[rank],
//                       f32 payload[prod(dims)]
inline constexpr std::array<char, 8> kWeightMagic = {'R', 'T', 'B', 'W', 'G', 'T', '0', '1'};

namespace detail {

static_assert(std::endian::native == std::endian::little, "weight blobs assume a little-endian host");

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline bool read_u32(std::istream& is, std::uint32_t& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return static_cast<bool>(is);
}

}  // namespace detail

inline void write_weights(std::ostream& os, const WeightStore& weights) {
  os.write(kWeightMagic.data(), kWeightMagic.size());
  for (const auto& [name, tensor] : weights) {
    detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32(os, static_cast<std::uint32_t>(tensor.rank()));
    for (auto d : tensor.shape()) detail::write_u32(os, static_cast<std::uint32_t>(d));
    for (double v : tensor.data()) {
      const auto f = static_cast<float>(v);
      os.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
  }
  if (!os) throw IOError("failed writing weight blob");
}

inline WeightStore read_weights(std::istream& is) {
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kWeightMagic) throw IOError("weight blob: bad magic header");
  WeightStore store;
  std::uint32_t name_len = 0;
  while (detail::read_u32(is, name_len)) {
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::uint32_t rank = 0;
    if (!is || !detail::read_u32(is, rank)) throw IOError("weight blob: truncated record header");
    Shape shape(rank);
    for (auto& d : shape) {
      std::uint32_t v = 0;
      if (!detail::read_u32(is, v)) throw IOError("weight blob: truncated dims for " + name);
      d = v;
    }
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) {
      float f = 0;
      is.read(reinterpret_cast<char*>(&f), sizeof f);
      if (!is) throw IOError("weight blob: truncated payload for " + name);
      v = f;
    }
    store.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return store;
}

inline void save_weights(const std::string& path, const WeightStore& weights) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IOError("cannot open " + path + " for writing");
  write_weights(os, weights);
}

inline WeightStore load_weights(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IOError("cannot open " + path);
  return read_weights(is);
}

}  // namespace rtbev
