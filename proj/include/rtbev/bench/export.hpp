#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rtbev/bev/geometry.hpp"
#include "rtbev/core/errors.hpp"
#include "rtbev/graph/text_format.hpp"
#include "rtbev/pipeline/softargmax.hpp"

namespace rtbev {

enum class ElevationFormat { pgm, csv };

/// Grey level for an elevation: [bin_min, bin_max] cm maps affinely onto
/// [0, 65535], clamped and rounded.
inline std::uint16_t elevation_to_grey(double cm, double lo, double hi) {
  if (!(hi > lo)) return 32768;
  const double t = std::clamp((cm - lo) / (hi - lo), 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(t * 65535.0));
}

/// Binary 16-bit PGM, big-endian samples, row j = y cell j. Invalid cells
/// are written as 0.
inline std::string pgm_bytes(const ElevationMap& m) {
  std::ostringstream os;
  os.precision(17);
  os << "P5\n# elevation_cm = " << m.bin_min_cm << " + grey * (" << m.bin_max_cm << " - " << m.bin_min_cm
     << ") / 65535; invalid cells 0\n"
     << m.nx << ' ' << m.ny << "\n65535\n";
  for (std::size_t c = 0; c < m.values.size(); ++c) {
    const std::uint16_t g = m.valid[c] ? elevation_to_grey(m.values[c], m.bin_min_cm, m.bin_max_cm) : 0;
    os.put(static_cast<char>(g >> 8));
    os.put(static_cast<char>(g & 0xff));
  }
  return os.str();
}

/// One line per y cell, %.9g values, empty fields for invalid cells.
inline std::string csv_text(const ElevationMap& m) {
  std::string out;
  char buf[32];
  for (int j = 0; j < m.ny; ++j) {
    for (int i = 0; i < m.nx; ++i) {
      if (i) out += ',';
      if (m.is_valid(j, i)) {
        std::snprintf(buf, sizeof buf, "%.9g", m.at(j, i));
        out += buf;
      }
    }
    out += '\n';
  }
  return out;
}

inline void export_elevation(const ElevationMap& m, const std::string& path, ElevationFormat format) {
  if (format == ElevationFormat::csv) {
    write_text_file(path, csv_text(m));
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IOError("cannot open " + path + " for writing");
  const std::string bytes = pgm_bytes(m);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IOError("failed writing " + path);
}

/// Wavefront OBJ in metres: one vertex per valid cell, two triangles for
/// every 2x2 block of valid cells, counter-clockwise seen from above.
inline std::string obj_text(const ElevationMap& m, const VoxelGrid& grid) {
  if (m.ny != grid.ny || m.nx != grid.nx) throw ShapeError("elevation map does not match the grid");
  std::ostringstream os;
  os.precision(9);
  std::vector<long> index(m.values.size(), 0);
  long next = 1;
  for (int j = 0; j < m.ny; ++j)
    for (int i = 0; i < m.nx; ++i) {
      if (!m.is_valid(j, i)) continue;
      index[static_cast<std::size_t>(j) * m.nx + i] = next++;
      os << "v " << grid.x_center(i) << ' ' << grid.y_center(j) << ' ' << m.at(j, i) / 100.0 << '\n';
    }
  for (int j = 0; j + 1 < m.ny; ++j)
    for (int i = 0; i + 1 < m.nx; ++i) {
      const long a = index[static_cast<std::size_t>(j) * m.nx + i], b = index[static_cast<std::size_t>(j) * m.nx + i + 1];
      const long c = index[static_cast<std::size_t>(j + 1) * m.nx + i + 1], d = index[static_cast<std::size_t>(j + 1) * m.nx + i];
      if (!a || !b || !c || !d) continue;
      os << "f " << a << ' ' << b << ' ' << c << "\nf " << a << ' ' << c << ' ' << d << '\n';
    }
  return os.str();
}

inline void export_mesh(const ElevationMap& m, const VoxelGrid& grid, const std::string& path) {
  write_text_file(path, obj_text(m, grid));
}

}  // namespace rtbev
