#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rtbev/core/errors.hpp"
#include "rtbev/core/half.hpp"
#include "rtbev/core/tensor.hpp"

namespace rtbev {

struct ConvParams {
  int stride = 1;
  int pad = 0;
  int groups = 1;
};

enum class Activation { relu, sigmoid };

namespace detail {

inline void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
}

// Output extent of a strided window; integral division is mandatory.
inline std::size_t conv_extent(std::size_t in, std::size_t k, int stride, int pad, const char* axis) {
  const long long span = static_cast<long long>(in) + 2LL * pad - static_cast<long long>(k);
  if (span < 0)
    throw ShapeError(std::string("kernel larger than padded input along ") + axis);
  if (span % stride != 0)
    throw ShapeError(std::string("non-integral output size along ") + axis + " (in=" +
                     std::to_string(in) + ", k=" + std::to_string(k) + ", stride=" +
                     std::to_string(stride) + ", pad=" + std::to_string(pad) + ")");
  return static_cast<std::size_t>(span / stride + 1);
}

inline void check_conv_params(const ConvParams& p) {
  if (p.stride < 1) throw ShapeError("stride must be >= 1");
  if (p.pad < 0) throw ShapeError("pad must be >= 0");
  if (p.groups < 1) throw ShapeError("groups must be >= 1");
}

inline void check_bias(const Tensor* bias, std::size_t channels) {
  if (bias && (bias->rank() != 1 || bias->dim(0) != channels))
    throw ShapeError("bias shape " + shape_string(bias->shape()) + " does not match " +
                     std::to_string(channels) + " output channels");
}

// Range of output positions o with 0 <= o*stride + offset < in_len.
struct OutRange {
  long long lo;
  long long hi;  // exclusive
};

inline OutRange valid_outputs(long long offset, long long in_len, long long out_len, long long stride) {
  long long lo = 0;
  if (offset < 0) lo = (-offset + stride - 1) / stride;
  long long hi = out_len;
  const long long last = in_len - 1 - offset;  // o*stride <= last
  if (last < 0) return {0, 0};
  hi = std::min(hi, last / stride + 1);
  return {lo, std::max(lo, hi)};
}

}  // namespace detail

/// 2-D cross-correlation. Weight layout [Cout, Cin/groups, kh, kw].
inline Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias,
                     const ConvParams& params, CostMeter* meter = nullptr) {
  detail::require_rank(input, 4, "conv2d input");
  detail::require_rank(weight, 4, "conv2d weight");
  detail::check_conv_params(params);
  const std::size_t n_batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weight.dim(0), cin_g = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  const auto groups = static_cast<std::size_t>(params.groups);
  if (cin % groups != 0 || cout % groups != 0)
    throw ShapeError("conv2d channels not divisible by groups");
  if (cin_g != cin / groups)
    throw ShapeError("conv2d weight " + shape_string(weight.shape()) + " incompatible with input " +
                     shape_string(input.shape()));
  detail::check_bias(bias, cout);
  const std::size_t ho = detail::conv_extent(h, kh, params.stride, params.pad, "H");
  const std::size_t wo = detail::conv_extent(w, kw, params.stride, params.pad, "W");
  const std::size_t cout_g = cout / groups;
  const long long s = params.stride, p = params.pad;

  Tensor out({n_batch, cout, ho, wo});
  const double* in = input.data().data();
  const double* wt = weight.data().data();
  double* dst = out.data().data();
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t co = 0; co < cout; ++co) {
      double* oplane = dst + (n * cout + co) * ho * wo;
      const double b = bias ? (*bias)[co] : 0.0;
      std::fill(oplane, oplane + ho * wo, b);
      const std::size_t g = co / cout_g;
      for (std::size_t cig = 0; cig < cin_g; ++cig) {
        const double* iplane = in + (n * cin + g * cin_g + cig) * h * w;
        const double* kern = wt + ((co * cin_g + cig) * kh) * kw;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const auto ys = detail::valid_outputs(static_cast<long long>(ky) - p, h, ho, s);
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const double wv = kern[ky * kw + kx];
            const long long xoff = static_cast<long long>(kx) - p;
            const auto xs = detail::valid_outputs(xoff, w, wo, s);
            for (long long oy = ys.lo; oy < ys.hi; ++oy) {
              const double* irow = iplane + (oy * s + static_cast<long long>(ky) - p) * w;
              double* orow = oplane + oy * wo;
              for (long long ox = xs.lo; ox < xs.hi; ++ox) orow[ox] += wv * irow[ox * s + xoff];
            }
          }
        }
      }
    }
  }
  if (meter) meter->add("conv2d", 2ull * n_batch * cout * cin_g * kh * kw * ho * wo);
  return out;
}

/// 3-D cross-correlation. Weight layout [Cout, Cin, kd, kh, kw].
inline Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor* bias,
                     const ConvParams& params, CostMeter* meter = nullptr) {
  detail::require_rank(input, 5, "conv3d input");
  detail::require_rank(weight, 5, "conv3d weight");
  detail::check_conv_params(params);
  if (params.groups != 1) throw ShapeError("conv3d supports groups=1 only");
  const std::size_t n_batch = input.dim(0), cin = input.dim(1);
  const std::size_t d = input.dim(2), h = input.dim(3), w = input.dim(4);
  const std::size_t cout = weight.dim(0), kd = weight.dim(2), kh = weight.dim(3), kw = weight.dim(4);
  if (weight.dim(1) != cin)
    throw ShapeError("conv3d weight " + shape_string(weight.shape()) + " incompatible with input " +
                     shape_string(input.shape()));
  detail::check_bias(bias, cout);
  const std::size_t dout = detail::conv_extent(d, kd, params.stride, params.pad, "D");
  const std::size_t ho = detail::conv_extent(h, kh, params.stride, params.pad, "H");
  const std::size_t wo = detail::conv_extent(w, kw, params.stride, params.pad, "W");
  const long long s = params.stride, p = params.pad;

  Tensor out({n_batch, cout, dout, ho, wo});
  const double* in = input.data().data();
  const double* wt = weight.data().data();
  double* dst = out.data().data();
  const std::size_t ivol = d * h * w, ovol = dout * ho * wo;
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t co = 0; co < cout; ++co) {
      double* ovolp = dst + (n * cout + co) * ovol;
      std::fill(ovolp, ovolp + ovol, bias ? (*bias)[co] : 0.0);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* ivolp = in + (n * cin + ci) * ivol;
        const double* kern = wt + (co * cin + ci) * kd * kh * kw;
        for (std::size_t kz = 0; kz < kd; ++kz) {
          const auto zs = detail::valid_outputs(static_cast<long long>(kz) - p, d, dout, s);
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const auto ys = detail::valid_outputs(static_cast<long long>(ky) - p, h, ho, s);
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const double wv = kern[(kz * kh + ky) * kw + kx];
              const long long xoff = static_cast<long long>(kx) - p;
              const auto xs = detail::valid_outputs(xoff, w, wo, s);
              if (xs.lo >= xs.hi) continue;
              for (long long oz = zs.lo; oz < zs.hi; ++oz) {
                const long long iz = oz * s + static_cast<long long>(kz) - p;
                for (long long oy = ys.lo; oy < ys.hi; ++oy) {
                  const long long iy = oy * s + static_cast<long long>(ky) - p;
                  const double* irow = ivolp + (iz * h + iy) * w;
                  double* orow = ovolp + (oz * ho + oy) * wo;
                  if (s == 1) {
                    const double* src = irow + xoff;
                    for (long long ox = xs.lo; ox < xs.hi; ++ox) orow[ox] += wv * src[ox];
                  } else {
                    for (long long ox = xs.lo; ox < xs.hi; ++ox) orow[ox] += wv * irow[ox * s + xoff];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  if (meter) meter->add("conv3d", 2ull * n_batch * cout * cin * kd * kh * kw * ovol);
  return out;
}

/// Transposed 3-D convolution with kernel 4, stride 2, pad 1; doubles D, H
/// and W. Weight layout [Cin, Cout, 4, 4, 4]. This is the exact adjoint of
/// conv3d(., weight, stride 2, pad 1).
inline Tensor deconv3d_2x(const Tensor& input, const Tensor& weight, const Tensor* bias = nullptr,
                          CostMeter* meter = nullptr) {
  detail::require_rank(input, 5, "deconv3d input");
  detail::require_rank(weight, 5, "deconv3d weight");
  constexpr std::size_t k = 4;
  constexpr long long s = 2, p = 1;
  const std::size_t n_batch = input.dim(0), cin = input.dim(1);
  const std::size_t d = input.dim(2), h = input.dim(3), w = input.dim(4);
  if (weight.dim(0) != cin || weight.dim(2) != k || weight.dim(3) != k || weight.dim(4) != k)
    throw ShapeError("deconv3d weight " + shape_string(weight.shape()) +
                     " must be [Cin, Cout, 4, 4, 4] with Cin=" + std::to_string(cin));
  const std::size_t cout = weight.dim(1);
  detail::check_bias(bias, cout);
  const std::size_t dout = 2 * d, ho = 2 * h, wo = 2 * w;

  Tensor out({n_batch, cout, dout, ho, wo});
  const double* in = input.data().data();
  const double* wt = weight.data().data();
  double* dst = out.data().data();
  const std::size_t ivol = d * h * w, ovol = dout * ho * wo;
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t co = 0; co < cout; ++co) {
      double* ovolp = dst + (n * cout + co) * ovol;
      std::fill(ovolp, ovolp + ovol, bias ? (*bias)[co] : 0.0);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* ivolp = in + (n * cin + ci) * ivol;
        const double* kern = wt + (ci * cout + co) * k * k * k;
        for (std::size_t kz = 0; kz < k; ++kz) {
          // output index = 2*input + k - 1
          const auto zs = detail::valid_outputs(static_cast<long long>(kz) - p, dout, d, s);
          for (std::size_t ky = 0; ky < k; ++ky) {
            const auto ys = detail::valid_outputs(static_cast<long long>(ky) - p, ho, h, s);
            for (std::size_t kx = 0; kx < k; ++kx) {
              const double wv = kern[(kz * k + ky) * k + kx];
              const long long xoff = static_cast<long long>(kx) - p;
              const auto xs = detail::valid_outputs(xoff, wo, w, s);
              for (long long iz = zs.lo; iz < zs.hi; ++iz) {
                const long long oz = iz * s + static_cast<long long>(kz) - p;
                for (long long iy = ys.lo; iy < ys.hi; ++iy) {
                  const long long oy = iy * s + static_cast<long long>(ky) - p;
                  const double* irow = ivolp + (iz * h + iy) * w;
                  double* orow = ovolp + (oz * ho + oy) * wo;
                  for (long long ix = xs.lo; ix < xs.hi; ++ix) orow[ix * s + xoff] += wv * irow[ix];
                }
              }
            }
          }
        }
      }
    }
  }
  if (meter) meter->add("deconv3d", 2ull * n_batch * cin * cout * k * k * k * ivol);
  return out;
}

/// Per-channel scale and shift (inference-folded batch norm).
inline Tensor affine_channel(const Tensor& input, std::span<const double> scale,
                             std::span<const double> shift, CostMeter* meter = nullptr) {
  if (input.rank() < 2) throw ShapeError("affine_channel expects rank >= 2");
  const std::size_t n_batch = input.dim(0), c = input.dim(1);
  if (scale.size() != c || shift.size() != c)
    throw ShapeError("affine_channel scale/shift length must equal C=" + std::to_string(c));
  const std::size_t inner = input.numel() / (n_batch * c);
  Tensor out = input;
  auto o = out.data();
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* p = o.data() + (n * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) p[i] = scale[ch] * p[i] + shift[ch];
    }
  if (meter) meter->add("affine", 2ull * input.numel());
  return out;
}

inline double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor activation(const Tensor& input, Activation kind) {
  Tensor out = input;
  for (double& v : out.data()) v = kind == Activation::relu ? (v > 0.0 ? v : 0.0) : sigmoid(v);
  return out;
}

/// Softmax along one axis, stabilized by subtracting each slice's maximum.
inline Tensor softmax_axis(const Tensor& input, int axis) {
  const int rank = static_cast<int>(input.rank());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError("softmax axis out of range");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= input.dim(i);
  for (int i = axis + 1; i < rank; ++i) inner *= input.dim(i);
  const std::size_t len = input.dim(axis);
  Tensor out = input;
  auto o = out.data();
  for (std::size_t a = 0; a < outer; ++a)
    for (std::size_t b = 0; b < inner; ++b) {
      double* base = o.data() + a * len * inner + b;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < len; ++k) m = std::max(m, base[k * inner]);
      double sum = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        base[k * inner] = std::exp(base[k * inner] - m);
        sum += base[k * inner];
      }
      for (std::size_t k = 0; k < len; ++k) base[k * inner] /= sum;
    }
  return out;
}

struct Sample {
  std::vector<double> values;
  bool in_view = false;
};

/// Bilinear lookup at pixel (u, v) of a [C, H, W] map. Points outside
/// [0, W-1] x [0, H-1] give zeros and in_view = false.
inline Sample bilinear_sample(const Tensor& feature, double u, double v) {
  detail::require_rank(feature, 3, "bilinear_sample feature");
  const std::size_t c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
  Sample s;
  s.values.assign(c, 0.0);
  if (!(u >= 0.0 && v >= 0.0 && u <= static_cast<double>(w - 1) && v <= static_cast<double>(h - 1)))
    return s;
  s.in_view = true;
  const auto x0 = static_cast<std::size_t>(std::floor(u));
  const auto y0 = static_cast<std::size_t>(std::floor(v));
  const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = u - static_cast<double>(x0), fy = v - static_cast<double>(y0);
  const double w00 = (1 - fx) * (1 - fy), w01 = fx * (1 - fy), w10 = (1 - fx) * fy, w11 = fx * fy;
  const auto f = feature.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = f.data() + ch * h * w;
    s.values[ch] = w00 * plane[y0 * w + x0] + w01 * plane[y0 * w + x1] + w10 * plane[y1 * w + x0] +
                   w11 * plane[y1 * w + x1];
  }
  return s;
}

/// Mean over every trailing dim after N and C; returns [N, C].
inline Tensor global_avg_pool(const Tensor& input) {
  if (input.rank() < 2) throw ShapeError("global_avg_pool expects rank >= 2");
  const std::size_t n_batch = input.dim(0), c = input.dim(1);
  const std::size_t inner = input.numel() / (n_batch * c);
  Tensor out({n_batch, c});
  const auto in = input.data();
  for (std::size_t i = 0; i < n_batch * c; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < inner; ++j) sum += in[i * inner + j];
    out[i] = sum / static_cast<double>(inner);
  }
  return out;
}

inline Tensor quantize_half(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data()) v = round_to_half(v);
  out.set_precision(Precision::half);
  return out;
}

/// Elementwise sum of equally shaped tensors.
inline Tensor add(std::span<const Tensor* const> operands) {
  if (operands.empty()) throw ShapeError("add needs at least one operand");
  Tensor out = *operands[0];
  for (std::size_t i = 1; i < operands.size(); ++i) {
    if (operands[i]->shape() != out.shape())
      throw ShapeError("add operand shapes differ: " + shape_string(out.shape()) + " vs " +
                       shape_string(operands[i]->shape()));
    auto o = out.data();
    const auto x = operands[i]->data();
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += x[j];
  }
  return out;
}

/// Concatenation along the channel axis (axis 1).
inline Tensor concat_channels(std::span<const Tensor* const> operands) {
  if (operands.empty()) throw ShapeError("concat needs at least one operand");
  const Tensor& first = *operands[0];
  if (first.rank() < 2) throw ShapeError("concat expects rank >= 2");
  std::size_t channels = 0;
  for (const Tensor* t : operands) {
    if (t->rank() != first.rank() || t->dim(0) != first.dim(0))
      throw ShapeError("concat operand rank/batch mismatch");
    for (std::size_t i = 2; i < first.rank(); ++i)
      if (t->dim(i) != first.dim(i)) throw ShapeError("concat spatial dims mismatch");
    channels += t->dim(1);
  }
  Shape shape = first.shape();
  shape[1] = channels;
  Tensor out(shape);
  const std::size_t n_batch = first.dim(0);
  const std::size_t inner = first.numel() / (n_batch * first.dim(1));
  auto o = out.data();
  for (std::size_t n = 0; n < n_batch; ++n) {
    std::size_t offset = 0;
    for (const Tensor* t : operands) {
      const std::size_t block = t->dim(1) * inner;
      const auto src = t->data();
      std::copy(src.begin() + n * block, src.begin() + (n + 1) * block,
                o.begin() + (n * channels * inner) + offset);
      offset += block;
    }
  }
  return out;
}

}  // namespace rtbev
