#pragma once

#include <array>
#include <span>

#include "pfnet/autograd.hpp"

namespace pfnet::losses {

// All losses take logits (B, 1, H, W) and a binary mask of the same shape
// and return a scalar Var averaged over the batch.

/// Mean per-pixel binary cross-entropy of sigmoid(logits) against gt.
Var bce_loss(const Var& logits, const Tensor& gt);

/// 1 - (sum p g + 1) / (sum (p + g - p g) + 1) per image, p = sigmoid(logits).
Var iou_loss(const Var& logits, const Tensor& gt);

/// Boundary emphasis 1 + 5 |meanpool_31(gt) - gt| (stride 1, zero padding
/// 15, window area always 961). Values lie in [1, 6].
Tensor boundary_weights(const Tensor& gt);

/// sum w bce / sum w per image.
Var weighted_bce_loss(const Var& logits, const Tensor& gt);
Var weighted_bce_loss(const Var& logits, const Tensor& gt, const Tensor& weights);

/// 1 - (sum w p g + 1) / (sum w (p + g - p g) + 1) per image.
Var weighted_iou_loss(const Var& logits, const Tensor& gt);
Var weighted_iou_loss(const Var& logits, const Tensor& gt, const Tensor& weights);

struct LossWeights {
  double pm = 1.0;
  /// Focus-module weights, finest output first: 2^(4 - i) for i = 2, 3, 4.
  std::array<double, 3> fm{4.0, 2.0, 1.0};
};

struct LossBreakdown {
  double pm = 0.0;
  std::array<double, 3> fm{};  // finest first
  double total = 0.0;
};

/// weights.pm * pm + sum_k weights.fm[k] * fm[k].
double combine(double pm, const std::array<double, 3>& fm,
               const LossWeights& weights = {});

/// L_pm (bce + iou) on the positioning output plus the weighted focus
/// losses (wbce + wiou). `fm_logits` holds three maps ordered fine to
/// coarse. Every logit map is bilinearly upsampled to the mask resolution
/// first. Throws DimensionError unless exactly three focus maps are given.
Var overall_loss(const Var& pm_logits, std::span<const Var> fm_logits,
                 const Tensor& gt, const LossWeights& weights = {},
                 LossBreakdown* breakdown = nullptr);

}  // namespace pfnet::losses
