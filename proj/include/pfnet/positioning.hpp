#pragma once

// Positioning module: non-local channel attention followed by non-local
// spatial attention on the coarsest features, then a 7x7 prediction head
// producing the initial location map.

#include "pfnet/model_config.hpp"
#include "pfnet/nn.hpp"

namespace pfnet {

struct AttentionOutput {
  Var features;
  /// Row-normalised attention map, (B, 1, C, C) or (B, 1, N, N).
  Var attention;
};

/// F' = gamma * (X V) + F, with X = softmax_rows(Q K^T), Q = K = V = F
/// reshaped to (C, N).
class ChannelAttention : public nn::Module {
 public:
  ChannelAttention();
  Var forward(const Var& x) { return forward_with_map(x).features; }
  AttentionOutput forward_with_map(const Var& x);
  nn::Parameter& gamma() { return gamma_; }

 private:
  nn::Parameter& gamma_;
};

/// F'' = gamma' * (V' X'^T) + F', with X' = softmax_rows(Q'^T K') and Q', K',
/// V' from 1x1 projections (query/key width max(1, C / 8)).
class SpatialAttention : public nn::Module {
 public:
  SpatialAttention(int channels, nn::Rng& rng);
  Var forward(const Var& x) { return forward_with_map(x).features; }
  AttentionOutput forward_with_map(const Var& x);

  nn::Parameter& gamma() { return gamma_; }
  nn::Conv2d& query() { return query_; }
  nn::Conv2d& key() { return key_; }
  nn::Conv2d& value() { return value_; }
  int query_channels() const { return query_channels_; }

 private:
  int query_channels_;
  nn::Conv2d& query_;
  nn::Conv2d& key_;
  nn::Conv2d& value_;
  nn::Parameter& gamma_;
};

/// 7x7 convolution (padding 3, with bias) to one logit channel.
class PredictionHead : public nn::Module {
 public:
  PredictionHead(int channels, nn::Rng& rng);
  Var forward(const Var& x) { return conv_.forward(x); }
  nn::Conv2d& conv() { return conv_; }

 private:
  nn::Conv2d& conv_;
};

class PositioningModule : public nn::Module {
 public:
  struct Output {
    Var features;
    Var logits;
  };

  PositioningModule(int channels, const ModelConfig& config, nn::Rng& rng);
  Output forward(const Var& x);

  ChannelAttention* channel_attention() { return channel_; }
  SpatialAttention* spatial_attention() { return spatial_; }
  PredictionHead& head() { return head_; }

 private:
  ChannelAttention* channel_ = nullptr;
  SpatialAttention* spatial_ = nullptr;
  PredictionHead& head_;
};

}  // namespace pfnet
