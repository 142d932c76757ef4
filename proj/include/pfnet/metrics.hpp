#pragma once

// Segmentation quality measures: mean absolute error, structure measure
// (S_alpha), adaptive enhanced-alignment measure (E_phi^ad) and weighted
// F-measure (F_beta^w). Maps are (1, 1, H, W) tensors; predictions are
// clipped to [0, 1], ground truth must be binary. All arithmetic is double.

#include <string>
#include <vector>

#include <json.hpp>

#include "pfnet/tensor.hpp"

namespace pfnet::metrics {

double mae(const Tensor& pred, const Tensor& gt);

/// alpha * S_object + (1 - alpha) * S_region, clipped to [0, 1].
/// All-background gt gives 1 - mean(pred); all-foreground gt gives mean(pred).
double s_measure(const Tensor& pred, const Tensor& gt, double alpha = 0.5);

/// Binarise pred at min(2 mean(pred), 1) (pixels >= threshold are
/// foreground; zero-valued pixels never are), then average the enhanced
/// alignment matrix over all pixels.
double e_measure_adaptive(const Tensor& pred, const Tensor& gt);

/// Weighted F-measure with beta^2 = 1, 7x7 Gaussian (sigma 5) error
/// dependency and distance-based background importance. All-background gt
/// gives 1 - mean(pred).
double weighted_f_measure(const Tensor& pred, const Tensor& gt, double beta2 = 1.0);

/// Euclidean distance from every pixel to the nearest foreground pixel of
/// a binary mask, together with every foreground pixel attaining it.
struct NearestForeground {
  std::vector<double> distance;
  /// For pixel i, nearest[offsets[i] .. offsets[i + 1]) lists the linear
  /// indices of all equidistant nearest foreground pixels in row-major order.
  std::vector<int> offsets;
  std::vector<int> nearest;
};
NearestForeground nearest_foreground(const Tensor& gt);

struct ImageMetrics {
  std::string name;
  double s_alpha = 0.0;
  double e_ad = 0.0;
  double wf = 0.0;
  double mae = 0.0;
};

struct MetricMeans {
  double s_alpha = 0.0;
  double e_ad = 0.0;
  double wf = 0.0;
  double mae = 0.0;
};

struct MetricReport {
  std::vector<ImageMetrics> per_image;
  MetricMeans mean;
  std::vector<std::string> errors;
  std::vector<std::string> warnings;

  /// Arithmetic mean over per_image (zeros when empty).
  void recompute_mean();
  nlohmann::json to_json() const;
  /// Aligned text table: name, S_alpha, E_phi^ad, F_beta^w, M.
  std::string to_table() const;
};

ImageMetrics evaluate_pair(const std::string& name, const Tensor& pred, const Tensor& gt);

/// Parallel over pairs; result order follows the input order.
MetricReport evaluate_pairs(const std::vector<std::string>& names,
                            const std::vector<Tensor>& preds,
                            const std::vector<Tensor>& gts);

/// Pairs files by stem, sorted by name. Predictions are resized to the gt
/// size when they differ; gt pixels >= 128 are foreground. Missing or
/// unreadable files become report errors and are excluded from the means.
MetricReport evaluate_dirs(const std::string& pred_dir, const std::string& gt_dir);

}  // namespace pfnet::metrics
