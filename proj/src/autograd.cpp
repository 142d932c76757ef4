#include "pfnet/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "pfnet/error.hpp"

namespace pfnet {

namespace {
thread_local bool g_grad_enabled = true;

void accumulate(const Var& input, const Tensor& delta) {
  if (!input->requires_grad) return;
  Tensor& g = input->grad_ref();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

bool any_requires_grad(const std::vector<Var>& inputs) {
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Var& v) { return v && v->requires_grad; });
}
}  // namespace

Tensor& Node::grad_ref() {
  if (grad.empty() && value.size() != 0) grad = Tensor::zeros(value.shape());
  return grad;
}

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

Var variable(Tensor value) {
  auto n = constant(std::move(value));
  n->requires_grad = true;
  return n;
}

Var make_op(Tensor value, std::vector<Var> inputs,
            std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (g_grad_enabled && any_requires_grad(inputs)) {
    n->requires_grad = true;
    n->inputs = std::move(inputs);
    n->backward = std::move(backward);
  }
  return n;
}

void backward(const Var& root) {
  if (root->value.size() != 1) {
    throw DimensionError("backward: root must hold a single element");
  }
  if (!root->requires_grad) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->grad_ref()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace ops {

Var conv2d(const Var& x, const Var& weight, const Var& bias,
           const kernels::ConvGeometry& g) {
  const Shape ys = kernels::conv_out_shape(x->shape(), weight->shape(), g);
  if (bias && bias->value.size() != static_cast<std::size_t>(ys.c)) {
    throw DimensionError("conv2d: bias length does not match output channels");
  }
  Tensor y(ys);
  kernels::parallel::conv2d_forward(x->value, weight->value,
                                    bias ? bias->value.data() : nullptr, g, y);
  std::vector<Var> in{x, weight};
  if (bias) in.push_back(bias);
  return make_op(std::move(y), std::move(in), [g](Node& self) {
    const Var& xi = self.inputs[0];
    const Var& wi = self.inputs[1];
    if (xi->requires_grad) {
      Tensor dx(xi->shape());
      kernels::parallel::conv2d_backward_input(self.grad, wi->value, g, dx);
      accumulate(xi, dx);
    }
    if (wi->requires_grad) {
      Tensor dw(wi->shape());
      kernels::parallel::conv2d_backward_weight(self.grad, xi->value, g, dw);
      accumulate(wi, dw);
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      const Shape s = self.grad.shape();
      Tensor db(self.inputs[2]->shape());
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const double* p = self.grad.plane(n, c);
          double acc = 0.0;
          for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
          db[c] += acc;
        }
      accumulate(self.inputs[2], db);
    }
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               const BatchNormState& state, bool training) {
  const Shape s = x->shape();
  if (gamma->value.size() != static_cast<std::size_t>(s.c) ||
      beta->value.size() != static_cast<std::size_t>(s.c)) {
    throw DimensionError("batch_norm: affine size does not match channels " +
                         std::to_string(s.c));
  }
  const std::size_t count = static_cast<std::size_t>(s.n) * s.plane();
  auto x_hat = std::make_shared<Tensor>(s);
  auto inv_std = std::make_shared<std::vector<double>>(s.c);
  Tensor y(s);
  for (int c = 0; c < s.c; ++c) {
    double mean = 0.0, var = 0.0;
    if (training) {
      for (int n = 0; n < s.n; ++n) {
        const double* p = x->value.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) mean += p[i];
      }
      mean /= static_cast<double>(count);
      for (int n = 0; n < s.n; ++n) {
        const double* p = x->value.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) {
          const double d = p[i] - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(count);
      if (state.running_mean && state.running_var) {
        const double unbiased =
            count > 1 ? var * count / static_cast<double>(count - 1) : var;
        double& rm = (*state.running_mean)[c];
        double& rv = (*state.running_var)[c];
        rm = (1.0 - state.momentum) * rm + state.momentum * mean;
        rv = (1.0 - state.momentum) * rv + state.momentum * unbiased;
      }
    } else {
      mean = (*state.running_mean)[c];
      var = (*state.running_var)[c];
    }
    const double is = 1.0 / std::sqrt(var + state.eps);
    (*inv_std)[c] = is;
    const double gm = gamma->value[c], bt = beta->value[c];
    for (int n = 0; n < s.n; ++n) {
      const double* p = x->value.plane(n, c);
      double* h = x_hat->plane(n, c);
      double* q = y.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        h[i] = (p[i] - mean) * is;
        q[i] = gm * h[i] + bt;
      }
    }
  }
  return make_op(std::move(y), {x, gamma, beta},
                 [x_hat, inv_std, training, count](Node& self) {
    const Shape s = self.grad.shape();
    const Var& xi = self.inputs[0];
    const Var& gi = self.inputs[1];
    const Var& bi = self.inputs[2];
    Tensor dx(s), dg(gi->shape()), db(bi->shape());
    const double m = static_cast<double>(count);
    for (int c = 0; c < s.c; ++c) {
      double sum_dy = 0.0, sum_dy_xh = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const double* g = self.grad.plane(n, c);
        const double* h = x_hat->plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) {
          sum_dy += g[i];
          sum_dy_xh += g[i] * h[i];
        }
      }
      dg[c] = sum_dy_xh;
      db[c] = sum_dy;
      const double k = gi->value[c] * (*inv_std)[c];
      for (int n = 0; n < s.n; ++n) {
        const double* g = self.grad.plane(n, c);
        const double* h = x_hat->plane(n, c);
        double* d = dx.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) {
          d[i] = training ? k * (g[i] - sum_dy / m - h[i] * sum_dy_xh / m)
                          : k * g[i];
        }
      }
    }
    accumulate(xi, dx);
    accumulate(gi, dg);
    accumulate(bi, db);
  });
}

Var relu(const Var& x) {
  Tensor y = x->value;
  for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
  return make_op(std::move(y), {x}, [](Node& self) {
    const Tensor& xv = self.inputs[0]->value;
    Tensor d(self.grad.shape());
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] = xv[i] > 0.0 ? self.grad[i] : 0.0;
    }
    accumulate(self.inputs[0], d);
  });
}

Var sigmoid(const Var& x) {
  Tensor y = x->value;
  for (auto& v : y.values()) v = stable_sigmoid(v);
  return make_op(std::move(y), {x}, [](Node& self) {
    Tensor d(self.grad.shape());
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double s = self.value[i];
      d[i] = self.grad[i] * s * (1.0 - s);
    }
    accumulate(self.inputs[0], d);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a->shape(), b->shape(), "add");
  Tensor y = a->value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b->value[i];
  return make_op(std::move(y), {a, b}, [](Node& self) {
    accumulate(self.inputs[0], self.grad);
    accumulate(self.inputs[1], self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a->shape(), b->shape(), "sub");
  Tensor y = a->value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b->value[i];
  return make_op(std::move(y), {a, b}, [](Node& self) {
    accumulate(self.inputs[0], self.grad);
    if (self.inputs[1]->requires_grad) {
      Tensor d = self.grad;
      for (auto& v : d.values()) v = -v;
      accumulate(self.inputs[1], d);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a->shape(), b->shape(), "mul");
  Tensor y = a->value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b->value[i];
  return make_op(std::move(y), {a, b}, [](Node& self) {
    const Var& ai = self.inputs[0];
    const Var& bi = self.inputs[1];
    if (ai->requires_grad) {
      Tensor d = self.grad;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= bi->value[i];
      accumulate(ai, d);
    }
    if (bi->requires_grad) {
      Tensor d = self.grad;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= ai->value[i];
      accumulate(bi, d);
    }
  });
}

Var one_minus(const Var& x) {
  Tensor y = x->value;
  for (auto& v : y.values()) v = 1.0 - v;
  return make_op(std::move(y), {x}, [](Node& self) {
    Tensor d = self.grad;
    for (auto& v : d.values()) v = -v;
    accumulate(self.inputs[0], d);
  });
}

Var scale(const Var& x, const Var& s) {
  if (s->value.size() != 1) throw DimensionError("scale: factor must be scalar");
  const double k = s->value[0];
  Tensor y = x->value;
  for (auto& v : y.values()) v *= k;
  return make_op(std::move(y), {x, s}, [](Node& self) {
    const Var& xi = self.inputs[0];
    const Var& si = self.inputs[1];
    if (xi->requires_grad) {
      Tensor d = self.grad;
      const double kk = si->value[0];
      for (auto& v : d.values()) v *= kk;
      accumulate(xi, d);
    }
    if (si->requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        acc += self.grad[i] * xi->value[i];
      }
      si->grad_ref()[0] += acc;
    }
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_channels: nothing to join");
  Shape s = parts.front()->shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape q = p->shape();
    if (q.n != s.n || q.h != s.h || q.w != s.w) {
      throw DimensionError("concat_channels: mismatched part " + q.str());
    }
    channels += q.c;
  }
  s.c = channels;
  Tensor y(s);
  for (int n = 0; n < s.n; ++n) {
    int c0 = 0;
    for (const auto& p : parts) {
      const Shape q = p->shape();
      std::copy(p->value.plane(n, 0), p->value.plane(n, 0) + q.c * q.plane(),
                y.plane(n, c0));
      c0 += q.c;
    }
  }
  std::vector<Var> in(parts.begin(), parts.end());
  return make_op(std::move(y), std::move(in), [](Node& self) {
    const Shape s = self.grad.shape();
    int c0 = 0;
    for (const auto& p : self.inputs) {
      const Shape q = p->shape();
      if (p->requires_grad) {
        Tensor& g = p->grad_ref();
        for (int n = 0; n < s.n; ++n) {
          const double* src = self.grad.plane(n, c0);
          double* dst = g.plane(n, 0);
          for (std::size_t i = 0; i < q.c * q.plane(); ++i) dst[i] += src[i];
        }
      }
      c0 += q.c;
    }
  });
}

Var upsample_bilinear(const Var& x, int height, int width) {
  const Shape xs = x->shape();
  if (xs.h == height && xs.w == width) return x;
  if (height <= 0 || width <= 0) {
    throw DimensionError("upsample_bilinear: non-positive target size");
  }
  Tensor y(Shape{xs.n, xs.c, height, width});
  kernels::parallel::bilinear_forward(x->value, y);
  return make_op(std::move(y), {x}, [](Node& self) {
    Tensor d(self.inputs[0]->shape());
    kernels::parallel::bilinear_backward(self.grad, d);
    accumulate(self.inputs[0], d);
  });
}

Var max_pool2d(const Var& x, int kernel, int stride, int pad) {
  const Shape xs = x->shape();
  const int oh = (xs.h + 2 * pad - kernel) / stride + 1;
  const int ow = (xs.w + 2 * pad - kernel) / stride + 1;
  if (oh <= 0 || ow <= 0) throw DimensionError("max_pool2d: input too small");
  Tensor y(Shape{xs.n, xs.c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(y.size());
  std::size_t k = 0;
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j, ++k) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t arg = x->value.offset(n, c, 0, 0);
          for (int a = 0; a < kernel; ++a)
            for (int b = 0; b < kernel; ++b) {
              const int ih = i * stride - pad + a, iw = j * stride - pad + b;
              if (ih < 0 || ih >= xs.h || iw < 0 || iw >= xs.w) continue;
              const std::size_t off = x->value.offset(n, c, ih, iw);
              if (x->value[off] > best) {
                best = x->value[off];
                arg = off;
              }
            }
          y[k] = best;
          (*argmax)[k] = arg;
        }
  return make_op(std::move(y), {x}, [argmax](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    Tensor& g = self.inputs[0]->grad_ref();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      g[(*argmax)[i]] += self.grad[i];
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  return make_op(x->value.reshaped(shape), {x}, [](Node& self) {
    accumulate(self.inputs[0], self.grad);
  });
}

Var matmul(const Var& a, bool trans_a, const Var& b, bool trans_b) {
  const Shape as = a->shape(), bs = b->shape();
  const int m = trans_a ? as.w : as.h;
  const int n = trans_b ? bs.h : bs.w;
  Tensor c(Shape{as.n, 1, m, n});
  kernels::parallel::batched_matmul(a->value, trans_a, b->value, trans_b, c);
  return make_op(std::move(c), {a, b}, [trans_a, trans_b](Node& self) {
    const Var& ai = self.inputs[0];
    const Var& bi = self.inputs[1];
    // C = op(A) op(B):  dop(A) = dC op(B)^T,  dop(B) = op(A)^T dC
    if (ai->requires_grad) {
      Tensor da(ai->shape());
      if (!trans_a) {
        kernels::parallel::batched_matmul(self.grad, false, bi->value, !trans_b, da);
      } else {
        kernels::parallel::batched_matmul(bi->value, trans_b, self.grad, true, da);
      }
      accumulate(ai, da);
    }
    if (bi->requires_grad) {
      Tensor db(bi->shape());
      if (!trans_b) {
        kernels::parallel::batched_matmul(ai->value, !trans_a, self.grad, false, db);
      } else {
        kernels::parallel::batched_matmul(self.grad, true, ai->value, trans_a, db);
      }
      accumulate(bi, db);
    }
  });
}

Var softmax_rows(const Var& x) {
  const Shape s = x->shape();
  Tensor y = x->value;
  const std::size_t rows = y.size() / s.w;
  for (std::size_t r = 0; r < rows; ++r) {
    double* p = y.data() + r * s.w;
    const double mx = *std::max_element(p, p + s.w);
    double z = 0.0;
    for (int j = 0; j < s.w; ++j) {
      p[j] = std::exp(p[j] - mx);
      z += p[j];
    }
    for (int j = 0; j < s.w; ++j) p[j] /= z;
  }
  return make_op(std::move(y), {x}, [](Node& self) {
    const int w = self.grad.shape().w;
    const std::size_t rows = self.grad.size() / w;
    Tensor d(self.grad.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yv = self.value.data() + r * w;
      const double* g = self.grad.data() + r * w;
      double dot = 0.0;
      for (int j = 0; j < w; ++j) dot += g[j] * yv[j];
      for (int j = 0; j < w; ++j) d[r * w + j] = yv[j] * (g[j] - dot);
    }
    accumulate(self.inputs[0], d);
  });
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> coefficients) {
  if (terms.empty() || terms.size() != coefficients.size()) {
    throw DimensionError("weighted_sum: term/coefficient count mismatch");
  }
  Tensor y(terms.front()->shape());
  for (std::size_t t = 0; t < terms.size(); ++t) {
    require_same_shape(terms[t]->shape(), y.shape(), "weighted_sum");
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] += coefficients[t] * terms[t]->value[i];
    }
  }
  std::vector<double> coef(coefficients.begin(), coefficients.end());
  std::vector<Var> in(terms.begin(), terms.end());
  return make_op(std::move(y), std::move(in), [coef](Node& self) {
    for (std::size_t t = 0; t < self.inputs.size(); ++t) {
      if (!self.inputs[t]->requires_grad) continue;
      Tensor d = self.grad;
      for (auto& v : d.values()) v *= coef[t];
      accumulate(self.inputs[t], d);
    }
  });
}

}  // namespace ops
}  // namespace pfnet
