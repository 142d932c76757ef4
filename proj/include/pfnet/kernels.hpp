#pragma once

// Dense compute kernels behind the autograd ops.
//
// Two implementations are kept side by side:
//   reference::  straightforward loops, one output element at a time; the
//                ground truth for kernel tests.
//   parallel::   loop nests reordered for contiguous inner loops and split
//                across OpenMP threads over independent output planes.
//
// Both accumulate every output element over the same index order, so with
// floating-point contraction disabled they agree bit for bit and the
// parallel result does not depend on the thread count.

#include "pfnet/tensor.hpp"

namespace pfnet::kernels {

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
};

/// Output extent of a convolution along one axis.
int conv_out_extent(int in, int kernel, const ConvGeometry& g);

/// Shape of conv(x, w) for x (N, C, H, W) and w (O, C, K, K).
Shape conv_out_shape(const Shape& x, const Shape& w, const ConvGeometry& g);

namespace reference {

void conv2d_forward(const Tensor& x, const Tensor& w, const double* bias,
                    const ConvGeometry& g, Tensor& out);
void conv2d_backward_input(const Tensor& dy, const Tensor& w,
                           const ConvGeometry& g, Tensor& dx);
void conv2d_backward_weight(const Tensor& dy, const Tensor& x,
                            const ConvGeometry& g, Tensor& dw);

/// Half-pixel-centre bilinear resampling of every (n, c) plane to out's
/// spatial extent.
void bilinear_forward(const Tensor& x, Tensor& out);
void bilinear_backward(const Tensor& dy, Tensor& dx);

/// c[b] = op(a[b]) * op(b[b]) on (B, 1, rows, cols) matrices.
void batched_matmul(const Tensor& a, bool trans_a, const Tensor& b,
                    bool trans_b, Tensor& c);

}  // namespace reference

namespace parallel {

void conv2d_forward(const Tensor& x, const Tensor& w, const double* bias,
                    const ConvGeometry& g, Tensor& out);
void conv2d_backward_input(const Tensor& dy, const Tensor& w,
                           const ConvGeometry& g, Tensor& dx);
void conv2d_backward_weight(const Tensor& dy, const Tensor& x,
                            const ConvGeometry& g, Tensor& dw);
void bilinear_forward(const Tensor& x, Tensor& out);
void bilinear_backward(const Tensor& dy, Tensor& dx);
void batched_matmul(const Tensor& a, bool trans_a, const Tensor& b,
                    bool trans_b, Tensor& c);

}  // namespace parallel

/// Thread count used by the parallel kernels (1 when built without OpenMP).
int num_threads();
void set_num_threads(int n);

}  // namespace pfnet::kernels
