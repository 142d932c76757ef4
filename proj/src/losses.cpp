#include "pfnet/losses.hpp"

#include <cmath>
#include <vector>

#include "pfnet/error.hpp"

namespace pfnet::losses {

namespace {

constexpr int kPoolRadius = 15;
constexpr double kIouSmooth = 1.0;

void check_inputs(const Var& logits, const Tensor& gt, const Tensor* weights) {
  const Shape s = logits->shape();
  if (s.c != 1) throw DimensionError("loss: logits must be single channel, got " + s.str());
  require_same_shape(s, gt.shape(), "loss target");
  if (weights) require_same_shape(s, weights->shape(), "loss weights");
  for (double g : gt.values()) {
    if (g != 0.0 && g != 1.0) throw DomainError("loss: mask must be binary");
  }
}

double bce_term(double x, double g) {
  return std::max(x, 0.0) - x * g + std::log1p(std::exp(-std::abs(x)));
}

// bce with optional per-pixel weights; per-image weighted mean, batch mean.
Var bce_impl(const Var& logits, const Tensor& gt, const Tensor* weights) {
  check_inputs(logits, gt, weights);
  const Shape s = logits->shape();
  const std::size_t plane = s.plane();
  const Tensor& x = logits->value;
  double total = 0.0;
  std::vector<double> norm(static_cast<std::size_t>(s.n));
  for (int b = 0; b < s.n; ++b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = b * plane; i < (b + 1) * plane; ++i) {
      const double w = weights ? (*weights)[i] : 1.0;
      num += w * bce_term(x[i], gt[i]);
      den += w;
    }
    norm[b] = den;
    total += num / den;
  }
  const auto batch = static_cast<double>(s.n);
  Tensor gt_copy = gt;
  Tensor w_copy = weights ? *weights : Tensor();
  return make_op(Tensor::scalar(total / batch), {logits},
                 [gt_copy, w_copy, norm, batch, plane](Node& self) {
    const Var& in = self.inputs[0];
    const double up = self.grad[0];
    Tensor d(in->shape());
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double w = w_copy.empty() ? 1.0 : w_copy[i];
      d[i] = up * w * (stable_sigmoid(in->value[i]) - gt_copy[i]) /
             (norm[i / plane] * batch);
    }
    Tensor& g = in->grad_ref();
    for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i];
  });
}

Var iou_impl(const Var& logits, const Tensor& gt, const Tensor* weights) {
  check_inputs(logits, gt, weights);
  const Shape s = logits->shape();
  const std::size_t plane = s.plane();
  Tensor p = logits->value;
  for (auto& v : p.values()) v = stable_sigmoid(v);
  std::vector<double> inter(static_cast<std::size_t>(s.n)), uni(inter.size());
  double total = 0.0;
  for (int b = 0; b < s.n; ++b) {
    double i_sum = 0.0, u_sum = 0.0;
    for (std::size_t i = b * plane; i < (b + 1) * plane; ++i) {
      const double w = weights ? (*weights)[i] : 1.0;
      i_sum += w * p[i] * gt[i];
      u_sum += w * (p[i] + gt[i] - p[i] * gt[i]);
    }
    inter[b] = i_sum + kIouSmooth;
    uni[b] = u_sum + kIouSmooth;
    total += 1.0 - inter[b] / uni[b];
  }
  const auto batch = static_cast<double>(s.n);
  Tensor gt_copy = gt;
  Tensor w_copy = weights ? *weights : Tensor();
  return make_op(Tensor::scalar(total / batch), {logits},
                 [gt_copy, w_copy, p, inter, uni, batch, plane](Node& self) {
    const Var& in = self.inputs[0];
    const double up = self.grad[0];
    Tensor& g = in->grad_ref();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::size_t b = i / plane;
      const double w = w_copy.empty() ? 1.0 : w_copy[i];
      const double di = w * gt_copy[i];
      const double du = w * (1.0 - gt_copy[i]);
      const double dloss_dp = -(di * uni[b] - inter[b] * du) / (uni[b] * uni[b]);
      g[i] += up * dloss_dp * p[i] * (1.0 - p[i]) / batch;
    }
  });
}

// Zero-padded box sum of radius r along rows then columns.
Tensor box_sum(const Tensor& x, int r) {
  const Shape s = x.shape();
  Tensor rows(s), out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* src = x.plane(n, c);
      double* tmp = rows.plane(n, c);
      std::vector<double> prefix(static_cast<std::size_t>(s.w) + 1);
      for (int y = 0; y < s.h; ++y) {
        prefix[0] = 0.0;
        for (int xx = 0; xx < s.w; ++xx) prefix[xx + 1] = prefix[xx] + src[y * s.w + xx];
        for (int xx = 0; xx < s.w; ++xx) {
          const int lo = std::max(0, xx - r), hi = std::min(s.w - 1, xx + r);
          tmp[y * s.w + xx] = prefix[hi + 1] - prefix[lo];
        }
      }
      double* dst = out.plane(n, c);
      std::vector<double> col(static_cast<std::size_t>(s.h) + 1);
      for (int xx = 0; xx < s.w; ++xx) {
        col[0] = 0.0;
        for (int y = 0; y < s.h; ++y) col[y + 1] = col[y] + tmp[y * s.w + xx];
        for (int y = 0; y < s.h; ++y) {
          const int lo = std::max(0, y - r), hi = std::min(s.h - 1, y + r);
          dst[y * s.w + xx] = col[hi + 1] - col[lo];
        }
      }
    }
  return out;
}

}  // namespace

Var bce_loss(const Var& logits, const Tensor& gt) { return bce_impl(logits, gt, nullptr); }

Var iou_loss(const Var& logits, const Tensor& gt) { return iou_impl(logits, gt, nullptr); }

Tensor boundary_weights(const Tensor& gt) {
  const double area = (2.0 * kPoolRadius + 1) * (2.0 * kPoolRadius + 1);
  Tensor w = box_sum(gt, kPoolRadius);
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = 1.0 + 5.0 * std::abs(w[i] / area - gt[i]);
  }
  return w;
}

Var weighted_bce_loss(const Var& logits, const Tensor& gt) {
  const Tensor w = boundary_weights(gt);
  return bce_impl(logits, gt, &w);
}

Var weighted_bce_loss(const Var& logits, const Tensor& gt, const Tensor& weights) {
  return bce_impl(logits, gt, &weights);
}

Var weighted_iou_loss(const Var& logits, const Tensor& gt) {
  const Tensor w = boundary_weights(gt);
  return iou_impl(logits, gt, &w);
}

Var weighted_iou_loss(const Var& logits, const Tensor& gt, const Tensor& weights) {
  return iou_impl(logits, gt, &weights);
}

double combine(double pm, const std::array<double, 3>& fm, const LossWeights& weights) {
  return weights.pm * pm + weights.fm[0] * fm[0] + weights.fm[1] * fm[1] +
         weights.fm[2] * fm[2];
}

Var overall_loss(const Var& pm_logits, std::span<const Var> fm_logits,
                 const Tensor& gt, const LossWeights& weights,
                 LossBreakdown* breakdown) {
  if (fm_logits.size() != 3) {
    throw DimensionError("overall_loss: expected 3 focus-module maps, got " +
                         std::to_string(fm_logits.size()));
  }
  const Shape gs = gt.shape();
  auto at_gt = [&](const Var& v) { return ops::upsample_bilinear(v, gs.h, gs.w); };

  Var pm_up = at_gt(pm_logits);
  Var pm_bce = bce_loss(pm_up, gt);
  Var pm_iou = iou_loss(pm_up, gt);

  const Tensor w = boundary_weights(gt);
  std::vector<Var> terms{pm_bce, pm_iou};
  std::vector<double> coef{weights.pm, weights.pm};
  std::array<double, 3> fm_values{};
  for (std::size_t k = 0; k < 3; ++k) {
    Var up = at_gt(fm_logits[k]);
    Var wbce = weighted_bce_loss(up, gt, w);
    Var wiou = weighted_iou_loss(up, gt, w);
    fm_values[k] = wbce->value[0] + wiou->value[0];
    terms.push_back(wbce);
    terms.push_back(wiou);
    coef.push_back(weights.fm[k]);
    coef.push_back(weights.fm[k]);
  }
  Var total = ops::weighted_sum(terms, coef);
  if (breakdown) {
    breakdown->pm = pm_bce->value[0] + pm_iou->value[0];
    breakdown->fm = fm_values;
    breakdown->total = total->value[0];
  }
  return total;
}

}  // namespace pfnet::losses
