#include <vector>

#include "kernel_common.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pfnet::kernels {

namespace {
// Below this many multiply-adds a kernel runs on the calling thread.
constexpr long long kParallelThreshold = 1 << 15;
}  // namespace

int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n < 1 ? 1 : n);
#else
  (void)n;
#endif
}

namespace parallel {

void conv2d_forward(const Tensor& x, const Tensor& w, const double* bias,
                    const ConvGeometry& g, Tensor& out) {
  const Shape xs = x.shape(), ws = w.shape(), ys = out.shape();
  detail::check_conv(xs, ws, ys, g);
  const int K = ws.h, S = g.stride;
  const long long work = static_cast<long long>(ys.numel()) * xs.c * K * K;
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelThreshold)
  for (int n = 0; n < ys.n; ++n) {
    for (int o = 0; o < ys.c; ++o) {
      double* y = out.plane(n, o);
      std::fill(y, y + ys.plane(), 0.0);
      for (int c = 0; c < xs.c; ++c) {
        const double* xp = x.plane(n, c);
        const double* wp = w.plane(o, c);
        for (int kh = 0; kh < K; ++kh) {
          const int off_h = kh * g.dilation - g.pad;
          int oh0, oh1;
          detail::valid_range(xs.h, ys.h, off_h, S, oh0, oh1);
          for (int kw = 0; kw < K; ++kw) {
            const int off_w = kw * g.dilation - g.pad;
            int ow0, ow1;
            detail::valid_range(xs.w, ys.w, off_w, S, ow0, ow1);
            const double wv = wp[kh * K + kw];
            for (int oh = oh0; oh < oh1; ++oh) {
              const double* xr = xp + (oh * S + off_h) * xs.w + off_w;
              double* yr = y + oh * ys.w;
              if (S == 1) {
                for (int ow = ow0; ow < ow1; ++ow) yr[ow] += wv * xr[ow];
              } else {
                for (int ow = ow0; ow < ow1; ++ow) yr[ow] += wv * xr[ow * S];
              }
            }
          }
        }
      }
      if (bias) {
        const double b = bias[o];
        for (std::size_t i = 0; i < ys.plane(); ++i) y[i] += b;
      }
    }
  }
}

void conv2d_backward_input(const Tensor& dy, const Tensor& w,
                           const ConvGeometry& g, Tensor& dx) {
  const Shape xs = dx.shape(), ws = w.shape(), ys = dy.shape();
  detail::check_conv(xs, ws, ys, g);
  const int K = ws.h, S = g.stride;
  const long long work = static_cast<long long>(ys.numel()) * xs.c * K * K;
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelThreshold)
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      double* xp = dx.plane(n, c);
      std::fill(xp, xp + xs.plane(), 0.0);
      for (int o = 0; o < ys.c; ++o) {
        const double* yp = dy.plane(n, o);
        const double* wp = w.plane(o, c);
        for (int kh = 0; kh < K; ++kh) {
          const int off_h = kh * g.dilation - g.pad;
          int oh0, oh1;
          detail::valid_range(xs.h, ys.h, off_h, S, oh0, oh1);
          for (int kw = 0; kw < K; ++kw) {
            const int off_w = kw * g.dilation - g.pad;
            int ow0, ow1;
            detail::valid_range(xs.w, ys.w, off_w, S, ow0, ow1);
            const double wv = wp[kh * K + kw];
            for (int oh = oh0; oh < oh1; ++oh) {
              double* xr = xp + (oh * S + off_h) * xs.w + off_w;
              const double* yr = yp + oh * ys.w;
              if (S == 1) {
                for (int ow = ow0; ow < ow1; ++ow) xr[ow] += wv * yr[ow];
              } else {
                for (int ow = ow0; ow < ow1; ++ow) xr[ow * S] += wv * yr[ow];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_weight(const Tensor& dy, const Tensor& x,
                            const ConvGeometry& g, Tensor& dw) {
  const Shape xs = x.shape(), ws = dw.shape(), ys = dy.shape();
  detail::check_conv(xs, ws, ys, g);
  const int K = ws.h, S = g.stride;
  const long long work = static_cast<long long>(ys.numel()) * xs.c * K * K;
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelThreshold)
  for (int o = 0; o < ws.n; ++o) {
    for (int c = 0; c < ws.c; ++c) {
      double* wp = dw.plane(o, c);
      for (int kh = 0; kh < K; ++kh) {
        const int off_h = kh * g.dilation - g.pad;
        int oh0, oh1;
        detail::valid_range(xs.h, ys.h, off_h, S, oh0, oh1);
        for (int kw = 0; kw < K; ++kw) {
          const int off_w = kw * g.dilation - g.pad;
          int ow0, ow1;
          detail::valid_range(xs.w, ys.w, off_w, S, ow0, ow1);
          double acc = 0.0;
          for (int n = 0; n < ys.n; ++n) {
            const double* yp = dy.plane(n, o);
            const double* xp = x.plane(n, c);
            for (int oh = oh0; oh < oh1; ++oh) {
              const double* xr = xp + (oh * S + off_h) * xs.w + off_w;
              const double* yr = yp + oh * ys.w;
              if (S == 1) {
                for (int ow = ow0; ow < ow1; ++ow) acc += yr[ow] * xr[ow];
              } else {
                for (int ow = ow0; ow < ow1; ++ow) acc += yr[ow] * xr[ow * S];
              }
            }
          }
          wp[kh * K + kw] = acc;
        }
      }
    }
  }
}

namespace {

std::vector<detail::Tap> taps(int in, int out) {
  std::vector<detail::Tap> t(static_cast<std::size_t>(out));
  for (int i = 0; i < out; ++i) t[i] = detail::source_tap(i, in, out);
  return t;
}

}  // namespace

void bilinear_forward(const Tensor& x, Tensor& out) {
  const Shape xs = x.shape(), ys = out.shape();
  if (xs.n != ys.n || xs.c != ys.c) {
    throw DimensionError("bilinear: batch/channel mismatch");
  }
  const auto ty = taps(xs.h, ys.h);
  const auto tx = taps(xs.w, ys.w);
  const int planes = ys.n * ys.c;
  const long long work = static_cast<long long>(ys.numel()) * 8;
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (int p = 0; p < planes; ++p) {
    const double* src = x.data() + static_cast<std::size_t>(p) * xs.plane();
    double* dst = out.data() + static_cast<std::size_t>(p) * ys.plane();
    for (int oy = 0; oy < ys.h; ++oy) {
      const auto& a = ty[oy];
      const double* r0 = src + a.i0 * xs.w;
      const double* r1 = src + a.i1 * xs.w;
      for (int ox = 0; ox < ys.w; ++ox) {
        const auto& b = tx[ox];
        const double top = (1.0 - b.l1) * r0[b.i0] + b.l1 * r0[b.i1];
        const double bot = (1.0 - b.l1) * r1[b.i0] + b.l1 * r1[b.i1];
        dst[oy * ys.w + ox] = (1.0 - a.l1) * top + a.l1 * bot;
      }
    }
  }
}

void bilinear_backward(const Tensor& dy, Tensor& dx) {
  const Shape xs = dx.shape(), ys = dy.shape();
  if (xs.n != ys.n || xs.c != ys.c) {
    throw DimensionError("bilinear: batch/channel mismatch");
  }
  const auto ty = taps(xs.h, ys.h);
  const auto tx = taps(xs.w, ys.w);
  const int planes = ys.n * ys.c;
  const long long work = static_cast<long long>(ys.numel()) * 8;
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (int p = 0; p < planes; ++p) {
    double* dst = dx.data() + static_cast<std::size_t>(p) * xs.plane();
    const double* src = dy.data() + static_cast<std::size_t>(p) * ys.plane();
    std::fill(dst, dst + xs.plane(), 0.0);
    for (int oy = 0; oy < ys.h; ++oy) {
      const auto& a = ty[oy];
      double* r0 = dst + a.i0 * xs.w;
      double* r1 = dst + a.i1 * xs.w;
      for (int ox = 0; ox < ys.w; ++ox) {
        const auto& b = tx[ox];
        const double gv = src[oy * ys.w + ox];
        r0[b.i0] += (1.0 - a.l1) * (1.0 - b.l1) * gv;
        r0[b.i1] += (1.0 - a.l1) * b.l1 * gv;
        r1[b.i0] += a.l1 * (1.0 - b.l1) * gv;
        r1[b.i1] += a.l1 * b.l1 * gv;
      }
    }
  }
}

void batched_matmul(const Tensor& a, bool trans_a, const Tensor& b,
                    bool trans_b, Tensor& c) {
  int m = 0, k = 0, n = 0;
  detail::matmul_dims(a.shape(), trans_a, b.shape(), trans_b, m, k, n);
  require_same_shape(c.shape(), Shape{a.shape().n, 1, m, n}, "batched_matmul");
  const int batches = a.shape().n;
  const int a_cols = a.shape().w, b_cols = b.shape().w;
  const long long work = static_cast<long long>(batches) * m * n * k;
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelThreshold)
  for (int bi = 0; bi < batches; ++bi) {
    for (int i = 0; i < m; ++i) {
      const double* ap = a.plane(bi, 0);
      const double* bp = b.plane(bi, 0);
      double* row = c.plane(bi, 0) + static_cast<std::size_t>(i) * n;
      if (trans_b) {
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          const double* brow = bp + static_cast<std::size_t>(j) * b_cols;
          for (int p = 0; p < k; ++p) {
            const double av = trans_a ? ap[p * a_cols + i] : ap[i * a_cols + p];
            acc += av * brow[p];
          }
          row[j] = acc;
        }
      } else {
        std::fill(row, row + n, 0.0);
        for (int p = 0; p < k; ++p) {
          const double av = trans_a ? ap[p * a_cols + i] : ap[i * a_cols + p];
          const double* brow = bp + static_cast<std::size_t>(p) * b_cols;
          for (int j = 0; j < n; ++j) row[j] += av * brow[j];
        }
      }
    }
  }
}

}  // namespace parallel
}  // namespace pfnet::kernels
