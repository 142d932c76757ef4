#pragma once

// Minimal reverse-mode automatic differentiation over Tensor values.
//
// A Var is a shared handle to a graph node. Ops record their inputs and a
// backward closure only while gradient recording is enabled and at least
// one input requires a gradient, so evaluation-mode forwards build no graph.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "pfnet/kernels.hpp"
#include "pfnet/tensor.hpp"

namespace pfnet {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> inputs;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialised on first use.
  Tensor& grad_ref();
  const Shape& shape() const { return value.shape(); }
};

Var constant(Tensor value);
Var variable(Tensor value);

/// Builds an op node. `backward` receives the node itself; its `grad` holds
/// d(root)/d(output) and the closure accumulates into inputs' grad_ref().
Var make_op(Tensor value, std::vector<Var> inputs,
            std::function<void(Node&)> backward);

/// Back-propagates from a single-element root, seeding d(root)/d(root) = 1.
void backward(const Var& root);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Running statistics owned by a batch-norm layer.
struct BatchNormState {
  Tensor* running_mean = nullptr;
  Tensor* running_var = nullptr;
  double momentum = 0.1;
  double eps = 1e-5;
};

namespace ops {

Var conv2d(const Var& x, const Var& weight, const Var& bias,
           const kernels::ConvGeometry& geometry);
Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               const BatchNormState& state, bool training);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// 1 - x
Var one_minus(const Var& x);
/// s * x for a single-element s.
Var scale(const Var& x, const Var& s);
Var concat_channels(std::span<const Var> parts);
Var upsample_bilinear(const Var& x, int height, int width);
Var max_pool2d(const Var& x, int kernel, int stride, int pad);
Var reshape(const Var& x, Shape shape);
/// Batched matrix product on (B, 1, rows, cols) operands.
Var matmul(const Var& a, bool trans_a, const Var& b, bool trans_b);
/// Softmax along the last axis, max-subtracted.
Var softmax_rows(const Var& x);
/// sum_i coefficients[i] * terms[i]; all terms share one shape.
Var weighted_sum(std::span<const Var> terms, std::span<const double> coefficients);

}  // namespace ops

double stable_sigmoid(double x);

}  // namespace pfnet
