#pragma once

// Naive reference kernels. They share nothing with the library kernels except
// the Tensor container: loops are written in the textbook gather order, padding
// is handled by explicit zero reads, and accumulation is in long double.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include "rtbev/core/tensor.hpp"

namespace rtbev::oracle {

inline double at_or_zero(const Tensor& t, std::size_t n, std::size_t c, long long y, long long x) {
  const long long h = static_cast<long long>(t.dim(2)), w = static_cast<long long>(t.dim(3));
  if (y < 0 || x < 0 || y >= h || x >= w) return 0.0;
  return t[((n * t.dim(1) + c) * t.dim(2) + static_cast<std::size_t>(y)) * t.dim(3) + static_cast<std::size_t>(x)];
}

inline Tensor conv2d(const Tensor& in, const Tensor& w, const Tensor* bias, int stride, int pad, int groups,
                     std::uint64_t* multiplies = nullptr) {
  const std::size_t N = in.dim(0), Cin = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t Cout = w.dim(0), Cg = w.dim(1), KH = w.dim(2), KW = w.dim(3);
  const std::size_t Ho = (H + 2 * pad - KH) / stride + 1, Wo = (W + 2 * pad - KW) / stride + 1;
  const std::size_t out_per_group = Cout / groups;
  (void)Cin;
  Tensor out({N, Cout, Ho, Wo});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          long double acc = bias ? (*bias)[co] : 0.0;
          for (std::size_t cg = 0; cg < Cg; ++cg)
            for (std::size_t ky = 0; ky < KH; ++ky)
              for (std::size_t kx = 0; kx < KW; ++kx) {
                const std::size_t ci = (co / out_per_group) * Cg + cg;
                const double x = at_or_zero(in, n, ci, static_cast<long long>(oy * stride + ky) - pad,
                                            static_cast<long long>(ox * stride + kx) - pad);
                acc += static_cast<long double>(x) * w[((co * Cg + cg) * KH + ky) * KW + kx];
                if (multiplies) ++*multiplies;
              }
          out[((n * Cout + co) * Ho + oy) * Wo + ox] = static_cast<double>(acc);
        }
  return out;
}

inline double at5(const Tensor& t, std::size_t n, std::size_t c, long long z, long long y, long long x) {
  const long long D = t.dim(2), H = t.dim(3), W = t.dim(4);
  if (z < 0 || y < 0 || x < 0 || z >= D || y >= H || x >= W) return 0.0;
  return t[(((n * t.dim(1) + c) * D + z) * H + y) * W + x];
}

inline Tensor conv3d(const Tensor& in, const Tensor& w, const Tensor* bias, int stride, int pad,
                     std::uint64_t* multiplies = nullptr) {
  const std::size_t N = in.dim(0), Cin = in.dim(1), D = in.dim(2), H = in.dim(3), W = in.dim(4);
  const std::size_t Cout = w.dim(0), KD = w.dim(2), KH = w.dim(3), KW = w.dim(4);
  const std::size_t Do = (D + 2 * pad - KD) / stride + 1, Ho = (H + 2 * pad - KH) / stride + 1,
                    Wo = (W + 2 * pad - KW) / stride + 1;
  Tensor out({N, Cout, Do, Ho, Wo});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t oz = 0; oz < Do; ++oz)
        for (std::size_t oy = 0; oy < Ho; ++oy)
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            long double acc = bias ? (*bias)[co] : 0.0;
            for (std::size_t ci = 0; ci < Cin; ++ci)
              for (std::size_t kz = 0; kz < KD; ++kz)
                for (std::size_t ky = 0; ky < KH; ++ky)
                  for (std::size_t kx = 0; kx < KW; ++kx) {
                    const double x = at5(in, n, ci, static_cast<long long>(oz * stride + kz) - pad,
                                         static_cast<long long>(oy * stride + ky) - pad,
                                         static_cast<long long>(ox * stride + kx) - pad);
                    acc += static_cast<long double>(x) * w[(((co * Cin + ci) * KD + kz) * KH + ky) * KW + kx];
                    if (multiplies) ++*multiplies;
                  }
            out[(((n * Cout + co) * Do + oz) * Ho + oy) * Wo + ox] = static_cast<double>(acc);
          }
  return out;
}

// Transposed conv as the explicit transpose of the stride-2/pad-1 conv matrix:
// out[o] = sum over (i, k) with o = 2i + k - 1.
inline Tensor deconv3d_2x(const Tensor& in, const Tensor& w) {
  const std::size_t N = in.dim(0), Cin = in.dim(1), D = in.dim(2), H = in.dim(3), W = in.dim(4);
  const std::size_t Cout = w.dim(1);
  Tensor out({N, Cout, 2 * D, 2 * H, 2 * W});
  const auto tap = [](long long o, long long i) { return o - 2 * i + 1; };
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t oz = 0; oz < 2 * D; ++oz)
        for (std::size_t oy = 0; oy < 2 * H; ++oy)
          for (std::size_t ox = 0; ox < 2 * W; ++ox) {
            long double acc = 0;
            for (std::size_t ci = 0; ci < Cin; ++ci)
              for (std::size_t iz = 0; iz < D; ++iz)
                for (std::size_t iy = 0; iy < H; ++iy)
                  for (std::size_t ix = 0; ix < W; ++ix) {
                    const long long kz = tap(oz, iz), ky = tap(oy, iy), kx = tap(ox, ix);
                    if (kz < 0 || ky < 0 || kx < 0 || kz > 3 || ky > 3 || kx > 3) continue;
                    acc += static_cast<long double>(in[(((n * Cin + ci) * D + iz) * H + iy) * W + ix]) *
                           w[(((ci * Cout + co) * 4 + kz) * 4 + ky) * 4 + kx];
                  }
            out[(((n * Cout + co) * 2 * D + oz) * 2 * H + oy) * 2 * W + ox] = static_cast<double>(acc);
          }
  return out;
}

// The same operator by definition: every input voxel scatters its 4x4x4
// taps into an uncropped (2D + 2)-sized output, which then loses one border
// voxel on each side. Every executed multiply is counted.
inline Tensor deconv3d_2x_scatter(const Tensor& in, const Tensor& w, std::uint64_t* multiplies = nullptr) {
  const std::size_t N = in.dim(0), Cin = in.dim(1), D = in.dim(2), H = in.dim(3), W = in.dim(4);
  const std::size_t Cout = w.dim(1);
  const std::size_t FD = 2 * D + 2, FH = 2 * H + 2, FW = 2 * W + 2;
  std::vector<long double> full(N * Cout * FD * FH * FW, 0.0L);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t ci = 0; ci < Cin; ++ci)
      for (std::size_t iz = 0; iz < D; ++iz)
        for (std::size_t iy = 0; iy < H; ++iy)
          for (std::size_t ix = 0; ix < W; ++ix) {
            const double x = in[(((n * Cin + ci) * D + iz) * H + iy) * W + ix];
            for (std::size_t co = 0; co < Cout; ++co)
              for (std::size_t kz = 0; kz < 4; ++kz)
                for (std::size_t ky = 0; ky < 4; ++ky)
                  for (std::size_t kx = 0; kx < 4; ++kx) {
                    full[(((n * Cout + co) * FD + 2 * iz + kz) * FH + 2 * iy + ky) * FW + 2 * ix + kx] +=
                        static_cast<long double>(x) * w[(((ci * Cout + co) * 4 + kz) * 4 + ky) * 4 + kx];
                    if (multiplies) ++*multiplies;
                  }
          }
  Tensor out({N, Cout, 2 * D, 2 * H, 2 * W});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t z = 0; z < 2 * D; ++z)
        for (std::size_t y = 0; y < 2 * H; ++y)
          for (std::size_t x = 0; x < 2 * W; ++x)
            out[(((n * Cout + co) * 2 * D + z) * 2 * H + y) * 2 * W + x] =
                static_cast<double>(full[(((n * Cout + co) * FD + z + 1) * FH + y + 1) * FW + x + 1]);
  return out;
}

inline std::vector<double> bilinear(const Tensor& f, double u, double v, bool& in_view) {
  const std::size_t C = f.dim(0), H = f.dim(1), W = f.dim(2);
  std::vector<double> out(C, 0.0);
  in_view = u >= 0 && v >= 0 && u <= W - 1.0 && v <= H - 1.0;
  if (!in_view) return out;
  const auto px = [&](std::size_t c, long long y, long long x) {
    y = std::min<long long>(y, H - 1);
    x = std::min<long long>(x, W - 1);
    return f[(c * H + y) * W + x];
  };
  const long long x0 = static_cast<long long>(u), y0 = static_cast<long long>(v);
  for (std::size_t c = 0; c < C; ++c) {
    long double acc = 0;
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        const long double wx = dx ? (u - x0) : 1.0L - (u - x0);
        const long double wy = dy ? (v - y0) : 1.0L - (v - y0);
        acc += wx * wy * px(c, y0 + dy, x0 + dx);
      }
    out[c] = static_cast<double>(acc);
  }
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& x) {
  long double m = -std::numeric_limits<long double>::infinity();
  for (double v : x) m = std::max<long double>(m, v);
  long double sum = 0;
  std::vector<long double> e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sum += e[i] = std::exp(static_cast<long double>(x[i]) - m);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(e[i] / sum);
  return out;
}

// Every finite binary16 value, decoded from its bit pattern.
inline double decode_half(std::uint16_t bits) {
  const int sign = bits >> 15, exp = (bits >> 10) & 0x1f, frac = bits & 0x3ff;
  double mag = exp == 0 ? std::ldexp(frac, -24) : std::ldexp(1024 + frac, exp - 25);
  if (exp == 31) mag = frac ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
  return sign ? -mag : mag;
}

// Nearest binary16 by exhaustive search over non-negative patterns; ties go to
// the even bit pattern. Values at or past the midpoint above the largest
// finite half overflow to infinity.
inline double nearest_half(double x) {
  if (x == 0.0 || !std::isfinite(x)) return x;
  const double mag = std::fabs(x);
  double best = 0.0;
  std::uint16_t best_bits = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::uint32_t b = 0; b < 0x7c00; ++b) {
    const double h = decode_half(static_cast<std::uint16_t>(b));
    const double err = std::fabs(h - mag);
    if (err < best_err || (err == best_err && (b & 1) == 0)) {
      best_err = err;
      best = h;
      best_bits = static_cast<std::uint16_t>(b);
    }
  }
  (void)best_bits;
  if (mag >= 65504.0 + 16.0) best = std::numeric_limits<double>::infinity();
  return std::copysign(best, x);
}

inline double max_abs(const Tensor& t) {
  double m = 0;
  for (double v : t.data()) m = std::max(m, std::fabs(v));
  return m;
}

// max |a - b| / max(|b|_inf, tiny)
inline double rel_error(const Tensor& a, const Tensor& b) {
  double err = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) err = std::max(err, std::fabs(a[i] - b[i]));
  return err / std::max(max_abs(b), 1e-300);
}

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace rtbev::oracle
