#include "pfnet/model_config.hpp"

#include <cmath>

#include "pfnet/error.hpp"

namespace pfnet {

Backbone parse_backbone(std::string_view name) {
  if (name == "tiny-encoder") return Backbone::kTinyEncoder;
  if (name == "resnet50-adapter") return Backbone::kResNet50;
  throw ConfigError("unknown backbone '" + std::string(name) + "'");
}

std::string to_string(Backbone backbone) {
  switch (backbone) {
    case Backbone::kTinyEncoder:
      return "tiny-encoder";
    case Backbone::kResNet50:
      return "resnet50-adapter";
  }
  throw ConfigError("unknown backbone");
}

void ModelConfig::validate() const {
  for (int c : reduced_channels) {
    if (c <= 0) throw ConfigError("reduced_channels must be positive");
  }
  if (!(width_multiplier > 0.0) || !std::isfinite(width_multiplier)) {
    throw ConfigError("width_multiplier must be a positive real");
  }
}

int ModelConfig::reduced_width(int level) const {
  if (level < 1 || level > 4) {
    throw DimensionError("feature level must be in 1..4, got " +
                         std::to_string(level));
  }
  const long w = std::lround(reduced_channels[level - 1] * width_multiplier);
  return w < 1 ? 1 : static_cast<int>(w);
}

void check_image_shape(const Shape& s) {
  if (s.n < 1 || s.c != 3) {
    throw DimensionError("image must be (B >= 1, 3, H, W), got " + s.str());
  }
  if (s.h <= 0 || s.w <= 0 || s.h % 32 != 0 || s.w % 32 != 0) {
    throw DimensionError("image height and width must be positive multiples of 32, got " +
                         s.str());
  }
}

Tensor normalize_image(const Tensor& rgb) {
  static constexpr double kMean[3] = {0.485, 0.456, 0.406};
  static constexpr double kStd[3] = {0.229, 0.224, 0.225};
  const Shape s = rgb.shape();
  if (s.c != 3) throw DimensionError("normalize_image: expects 3 channels");
  Tensor out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < 3; ++c) {
      const double* src = rgb.plane(n, c);
      double* dst = out.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        dst[i] = (src[i] - kMean[c]) / kStd[c];
      }
    }
  return out;
}

}  // namespace pfnet
