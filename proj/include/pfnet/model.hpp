#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "pfnet/focus.hpp"
#include "pfnet/model_config.hpp"
#include "pfnet/nn.hpp"
#include "pfnet/positioning.hpp"

namespace pfnet {

/// Multi-level encoder emitting features at strides 4, 8, 16, 32.
class Encoder : public nn::Module {
 public:
  virtual std::array<Var, 4> forward(const Var& image) = 0;
  /// Native channel count of each level, fine to coarse.
  virtual std::array<int, 4> channels() const = 0;
};

/// Four-stage convolutional encoder (16/32/64/128 channels); each stage is a
/// strided 3x3 CBR followed by a 3x3 CBR.
class TinyEncoder : public Encoder {
 public:
  explicit TinyEncoder(nn::Rng& rng);
  std::array<Var, 4> forward(const Var& image) override;
  std::array<int, 4> channels() const override { return {16, 32, 64, 128}; }

 private:
  nn::ConvBnRelu& stem_;
  std::array<nn::ConvBnRelu*, 4> down_{};
  std::array<nn::ConvBnRelu*, 4> refine_{};
};

/// ResNet-50 (bottleneck layers 3-4-6-3) with torchvision parameter names,
/// so converted torchvision weights load by name.
class ResNet50Encoder : public Encoder {
 public:
  explicit ResNet50Encoder(nn::Rng& rng);
  std::array<Var, 4> forward(const Var& image) override;
  std::array<int, 4> channels() const override { return {256, 512, 1024, 2048}; }

  /// Loads parameters and BN statistics from a tensor archive; returns the
  /// number of tensors copied. Missing names keep their initial values,
  /// shape mismatches throw DimensionError.
  std::size_t load_weights(const std::string& path);

  class Bottleneck;

 private:
  nn::Conv2d& conv1_;
  nn::BatchNorm2d& bn1_;
  std::array<std::vector<Bottleneck*>, 4> layers_;
};

std::unique_ptr<Encoder> make_encoder(const ModelConfig& config, nn::Rng& rng);

/// Four 3x3 CBR layers mapping native widths to the reduced widths.
class ChannelReducer : public nn::Module {
 public:
  ChannelReducer(const std::array<int, 4>& in_channels, const ModelConfig& config,
                 nn::Rng& rng);
  FeatureMap forward(const FeatureMap& feature);
  nn::ConvBnRelu& layer(int level) { return *layers_[level - 1]; }
  int out_channels(int level) const { return out_[level - 1]; }

 private:
  std::array<nn::ConvBnRelu*, 4> layers_{};
  std::array<int, 4> in_{};
  std::array<int, 4> out_{};
};

struct ForwardOutput {
  LogitMap pm;                 // stride 32
  std::array<LogitMap, 3> fm;  // strides 16, 8, 4 (coarse to fine)
  Var final_logits;            // finest FM logits upsampled to (H, W)
  Tensor final_prob;           // sigmoid(final_logits), in [0, 1]
};

/// Encoder, channel reduction, positioning module and three focus modules.
class PFNet : public nn::Module {
 public:
  PFNet(const ModelConfig& config, std::uint64_t seed);

  std::vector<FeatureMap> extract_features(const Var& image);
  FeatureMap reduce_channels(const FeatureMap& feature);
  ForwardOutput forward(const Var& image);
  /// Evaluation-mode forward without graph recording.
  ForwardOutput infer(const Tensor& image);

  const ModelConfig& config() const { return config_; }
  Encoder& encoder() { return *encoder_; }
  ChannelReducer& reducer() { return reducer_; }
  PositioningModule& positioning() { return positioning_; }
  /// Focus module at pyramid level 1, 2 or 3.
  FocusModule& focus(int level) { return *focus_[level - 1]; }

 private:
  ModelConfig config_;
  nn::Rng rng_;
  Encoder* encoder_;
  ChannelReducer& reducer_;
  PositioningModule& positioning_;
  std::array<FocusModule*, 3> focus_{};
};

/// Stand-alone encoder pass: validates the image and returns the four levels.
std::vector<FeatureMap> extract_features(Encoder& encoder, const Var& image);

}  // namespace pfnet
