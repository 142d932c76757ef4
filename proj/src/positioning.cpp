#include "pfnet/positioning.hpp"

#include <algorithm>

namespace pfnet {

namespace {

nn::ConvOptions projection(int in, int out) {
  nn::ConvOptions o;
  o.in_channels = in;
  o.out_channels = out;
  o.kernel = 1;
  o.bias = true;
  o.init = nn::Init::kUniformFanIn;
  return o;
}

nn::ConvOptions head_options(int channels) {
  nn::ConvOptions o;
  o.in_channels = channels;
  o.out_channels = 1;
  o.kernel = 7;
  o.pad = 3;
  o.bias = true;
  o.init = nn::Init::kUniformFanIn;
  return o;
}

}  // namespace

ChannelAttention::ChannelAttention() : gamma_(register_scalar("gamma", 1.0)) {}

AttentionOutput ChannelAttention::forward_with_map(const Var& x) {
  const Shape s = x->shape();
  const int n = s.h * s.w;
  Var flat = ops::reshape(x, {s.n, 1, s.c, n});
  Var energy = ops::matmul(flat, false, flat, true);  // (C, C)
  Var attention = ops::softmax_rows(energy);
  Var aggregated = ops::reshape(ops::matmul(attention, false, flat, false), s);
  return {ops::add(ops::scale(aggregated, gamma_.var), x), attention};
}

SpatialAttention::SpatialAttention(int channels, nn::Rng& rng)
    : query_channels_(std::max(1, channels / 8)),
      query_(add_module<nn::Conv2d>("query", projection(channels, query_channels_), rng)),
      key_(add_module<nn::Conv2d>("key", projection(channels, query_channels_), rng)),
      value_(add_module<nn::Conv2d>("value", projection(channels, channels), rng)),
      gamma_(register_scalar("gamma", 1.0)) {}

AttentionOutput SpatialAttention::forward_with_map(const Var& x) {
  const Shape s = x->shape();
  const int n = s.h * s.w;
  Var q = ops::reshape(query_.forward(x), {s.n, 1, query_channels_, n});
  Var k = ops::reshape(key_.forward(x), {s.n, 1, query_channels_, n});
  Var v = ops::reshape(value_.forward(x), {s.n, 1, s.c, n});
  Var energy = ops::matmul(q, true, k, false);  // (N, N)
  Var attention = ops::softmax_rows(energy);
  // out[:, i] = sum_j V'[:, j] * X'[i, j]
  Var aggregated = ops::reshape(ops::matmul(v, false, attention, true), s);
  return {ops::add(ops::scale(aggregated, gamma_.var), x), attention};
}

PredictionHead::PredictionHead(int channels, nn::Rng& rng)
    : conv_(add_module<nn::Conv2d>("conv", head_options(channels), rng)) {}

PositioningModule::PositioningModule(int channels, const ModelConfig& config,
                                     nn::Rng& rng)
    : head_(add_module<PredictionHead>("head", channels, rng)) {
  if (config.use_channel_attention) {
    channel_ = &add_module<ChannelAttention>("channel_attention");
  }
  if (config.use_spatial_attention) {
    spatial_ = &add_module<SpatialAttention>("spatial_attention", channels, rng);
  }
}

PositioningModule::Output PositioningModule::forward(const Var& x) {
  Var f = x;
  if (channel_) f = channel_->forward(f);
  if (spatial_) f = spatial_->forward(f);
  return {f, head_.forward(f)};
}

}  // namespace pfnet
