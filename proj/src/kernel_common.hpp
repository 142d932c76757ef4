#pragma once

#include <algorithm>

#include "pfnet/error.hpp"
#include "pfnet/kernels.hpp"

namespace pfnet::kernels::detail {

/// One axis of a half-pixel-centre bilinear sample.
struct Tap {
  int i0;
  int i1;
  double l1;  // weight of i1; i0 gets 1 - l1
};

inline Tap source_tap(int dst, int in, int out) {
  const double scale = static_cast<double>(in) / out;
  double src = (dst + 0.5) * scale - 0.5;
  if (src < 0.0) src = 0.0;
  int i0 = std::min(static_cast<int>(src), in - 1);
  const int i1 = i0 + (i0 < in - 1 ? 1 : 0);
  return {i0, i1, src - i0};
}

inline int floor_div(int a, int b) {
  int q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

/// Output indices o in [lo, hi) with 0 <= o * stride + offset < in.
inline void valid_range(int in, int out, int offset, int stride, int& lo,
                        int& hi) {
  lo = std::max(0, floor_div(-offset + stride - 1, stride));
  hi = std::min(out, floor_div(in - 1 - offset, stride) + 1);
  if (hi < lo) hi = lo;
}

inline void check_conv(const Shape& x, const Shape& w, const Shape& y,
                       const ConvGeometry& g) {
  if (x.c != w.c) {
    throw DimensionError("conv2d: input channels " + std::to_string(x.c) +
                         " but weight expects " + std::to_string(w.c));
  }
  if (w.h != w.w) throw DimensionError("conv2d: non-square kernel");
  require_same_shape(y, conv_out_shape(x, w, g), "conv2d output");
}

inline void matmul_dims(const Shape& a, bool ta, const Shape& b, bool tb,
                        int& m, int& k, int& n) {
  if (a.c != 1 || b.c != 1 || a.n != b.n) {
    throw DimensionError("batched_matmul: expects (B, 1, R, C) operands, got " +
                         a.str() + " and " + b.str());
  }
  m = ta ? a.w : a.h;
  k = ta ? a.h : a.w;
  const int kb = tb ? b.w : b.h;
  n = tb ? b.h : b.w;
  if (k != kb) {
    throw DimensionError("batched_matmul: inner extents differ (" +
                         std::to_string(k) + " vs " + std::to_string(kb) + ")");
  }
}

}  // namespace pfnet::kernels::detail
