#include "kernel_common.hpp"

namespace pfnet::kernels {

int conv_out_extent(int in, int kernel, const ConvGeometry& g) {
  const int span = g.dilation * (kernel - 1) + 1;
  return (in + 2 * g.pad - span) / g.stride + 1;
}

Shape conv_out_shape(const Shape& x, const Shape& w, const ConvGeometry& g) {
  const int oh = conv_out_extent(x.h, w.h, g);
  const int ow = conv_out_extent(x.w, w.w, g);
  if (oh <= 0 || ow <= 0) {
    throw DimensionError("conv2d: input " + x.str() + " too small for kernel " +
                         w.str());
  }
  return {x.n, w.n, oh, ow};
}

namespace reference {

void conv2d_forward(const Tensor& x, const Tensor& w, const double* bias,
                    const ConvGeometry& g, Tensor& out) {
  const Shape xs = x.shape(), ws = w.shape(), ys = out.shape();
  detail::check_conv(xs, ws, ys, g);
  for (int n = 0; n < ys.n; ++n)
    for (int o = 0; o < ys.c; ++o)
      for (int oh = 0; oh < ys.h; ++oh)
        for (int ow = 0; ow < ys.w; ++ow) {
          double acc = 0.0;
          for (int c = 0; c < xs.c; ++c)
            for (int kh = 0; kh < ws.h; ++kh)
              for (int kw = 0; kw < ws.w; ++kw) {
                const int ih = oh * g.stride - g.pad + kh * g.dilation;
                const int iw = ow * g.stride - g.pad + kw * g.dilation;
                if (ih < 0 || ih >= xs.h || iw < 0 || iw >= xs.w) continue;
                acc += w.at(o, c, kh, kw) * x.at(n, c, ih, iw);
              }
          out.at(n, o, oh, ow) = bias ? acc + bias[o] : acc;
        }
}

void conv2d_backward_input(const Tensor& dy, const Tensor& w,
                           const ConvGeometry& g, Tensor& dx) {
  const Shape xs = dx.shape(), ws = w.shape(), ys = dy.shape();
  detail::check_conv(xs, ws, ys, g);
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      for (int ih = 0; ih < xs.h; ++ih)
        for (int iw = 0; iw < xs.w; ++iw) {
          double acc = 0.0;
          for (int o = 0; o < ys.c; ++o)
            for (int kh = 0; kh < ws.h; ++kh)
              for (int kw = 0; kw < ws.w; ++kw) {
                const int th = ih + g.pad - kh * g.dilation;
                const int tw = iw + g.pad - kw * g.dilation;
                if (th < 0 || tw < 0 || th % g.stride || tw % g.stride) continue;
                const int oh = th / g.stride, ow = tw / g.stride;
                if (oh >= ys.h || ow >= ys.w) continue;
                acc += w.at(o, c, kh, kw) * dy.at(n, o, oh, ow);
              }
          dx.at(n, c, ih, iw) = acc;
        }
}

void conv2d_backward_weight(const Tensor& dy, const Tensor& x,
                            const ConvGeometry& g, Tensor& dw) {
  const Shape xs = x.shape(), ws = dw.shape(), ys = dy.shape();
  detail::check_conv(xs, ws, ys, g);
  for (int o = 0; o < ws.n; ++o)
    for (int c = 0; c < ws.c; ++c)
      for (int kh = 0; kh < ws.h; ++kh)
        for (int kw = 0; kw < ws.w; ++kw) {
          double acc = 0.0;
          for (int n = 0; n < ys.n; ++n)
            for (int oh = 0; oh < ys.h; ++oh)
              for (int ow = 0; ow < ys.w; ++ow) {
                const int ih = oh * g.stride - g.pad + kh * g.dilation;
                const int iw = ow * g.stride - g.pad + kw * g.dilation;
                if (ih < 0 || ih >= xs.h || iw < 0 || iw >= xs.w) continue;
                acc += dy.at(n, o, oh, ow) * x.at(n, c, ih, iw);
              }
          dw.at(o, c, kh, kw) = acc;
        }
}

void bilinear_forward(const Tensor& x, Tensor& out) {
  const Shape xs = x.shape(), ys = out.shape();
  if (xs.n != ys.n || xs.c != ys.c) {
    throw DimensionError("bilinear: batch/channel mismatch");
  }
  for (int n = 0; n < ys.n; ++n)
    for (int c = 0; c < ys.c; ++c)
      for (int oy = 0; oy < ys.h; ++oy)
        for (int ox = 0; ox < ys.w; ++ox) {
          const auto ty = detail::source_tap(oy, xs.h, ys.h);
          const auto tx = detail::source_tap(ox, xs.w, ys.w);
          const double top = (1.0 - tx.l1) * x.at(n, c, ty.i0, tx.i0) +
                             tx.l1 * x.at(n, c, ty.i0, tx.i1);
          const double bot = (1.0 - tx.l1) * x.at(n, c, ty.i1, tx.i0) +
                             tx.l1 * x.at(n, c, ty.i1, tx.i1);
          out.at(n, c, oy, ox) = (1.0 - ty.l1) * top + ty.l1 * bot;
        }
}

void bilinear_backward(const Tensor& dy, Tensor& dx) {
  const Shape xs = dx.shape(), ys = dy.shape();
  if (xs.n != ys.n || xs.c != ys.c) {
    throw DimensionError("bilinear: batch/channel mismatch");
  }
  dx.fill(0.0);
  for (int n = 0; n < ys.n; ++n)
    for (int c = 0; c < ys.c; ++c)
      for (int oy = 0; oy < ys.h; ++oy)
        for (int ox = 0; ox < ys.w; ++ox) {
          const auto ty = detail::source_tap(oy, xs.h, ys.h);
          const auto tx = detail::source_tap(ox, xs.w, ys.w);
          const double gv = dy.at(n, c, oy, ox);
          dx.at(n, c, ty.i0, tx.i0) += (1.0 - ty.l1) * (1.0 - tx.l1) * gv;
          dx.at(n, c, ty.i0, tx.i1) += (1.0 - ty.l1) * tx.l1 * gv;
          dx.at(n, c, ty.i1, tx.i0) += ty.l1 * (1.0 - tx.l1) * gv;
          dx.at(n, c, ty.i1, tx.i1) += ty.l1 * tx.l1 * gv;
        }
}

void batched_matmul(const Tensor& a, bool trans_a, const Tensor& b,
                    bool trans_b, Tensor& c) {
  int m = 0, k = 0, n = 0;
  detail::matmul_dims(a.shape(), trans_a, b.shape(), trans_b, m, k, n);
  require_same_shape(c.shape(), Shape{a.shape().n, 1, m, n}, "batched_matmul");
  for (int bi = 0; bi < a.shape().n; ++bi)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int p = 0; p < k; ++p) {
          const double av = trans_a ? a.at(bi, 0, p, i) : a.at(bi, 0, i, p);
          const double bv = trans_b ? b.at(bi, 0, j, p) : b.at(bi, 0, p, j);
          acc += av * bv;
        }
        c.at(bi, 0, i, j) = acc;
      }
}

}  // namespace reference
}  // namespace pfnet::kernels
