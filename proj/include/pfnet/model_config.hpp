#pragma once

#include <array>
#include <string>
#include <string_view>

#include "pfnet/autograd.hpp"

namespace pfnet {

enum class Backbone { kTinyEncoder, kResNet50 };

Backbone parse_backbone(std::string_view name);
std::string to_string(Backbone backbone);

/// Architecture and ablation switches.
struct ModelConfig {
  Backbone backbone = Backbone::kTinyEncoder;
  /// Reduced widths per pyramid level, fine (level 1) to coarse (level 4),
  /// before the width multiplier.
  std::array<int, 4> reduced_channels{64, 128, 256, 512};
  double width_multiplier = 0.25;

  bool use_channel_attention = true;
  bool use_spatial_attention = true;
  bool use_fpd_stream = true;
  bool use_fnd_stream = true;
  bool use_attentive_split = true;

  /// Optional pretrained weights for the ResNet-50 adapter.
  std::string backbone_weights;

  /// Throws ConfigError on non-positive widths or multiplier.
  void validate() const;
  /// round(reduced_channels[level - 1] * width_multiplier), at least 1.
  int reduced_width(int level) const;

  bool operator==(const ModelConfig&) const = default;
};

/// Multi-level activation (B, C_l, H / s_l, W / s_l) with s_l = 2^(l+1).
struct FeatureMap {
  Var data;
  int level = 1;

  int stride() const { return 1 << (level + 1); }
  const Shape& shape() const { return data->shape(); }
};

/// Single-channel pre-sigmoid prediction.
struct LogitMap {
  Var data;
  int stride = 1;

  const Shape& shape() const { return data->shape(); }
};

/// Throws DimensionError unless `s` is a (B >= 1, 3, H, W) image shape with
/// H and W divisible by 32.
void check_image_shape(const Shape& s);

/// Standard ImageNet per-channel normalisation of an RGB tensor in [0, 1].
Tensor normalize_image(const Tensor& rgb);

}  // namespace pfnet
