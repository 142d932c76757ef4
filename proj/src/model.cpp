#include "pfnet/model.hpp"

#include "pfnet/archive.hpp"
#include "pfnet/error.hpp"

namespace pfnet {

namespace {

nn::ConvOptions conv(int in, int out, int kernel, int stride = 1) {
  nn::ConvOptions o;
  o.in_channels = in;
  o.out_channels = out;
  o.kernel = kernel;
  o.stride = stride;
  return o;
}

ModelConfig validated(const ModelConfig& c) {
  c.validate();
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tiny encoder

TinyEncoder::TinyEncoder(nn::Rng& rng)
    : stem_(add_module<nn::ConvBnRelu>("stem", conv(3, 16, 3, 2), rng)) {
  const auto widths = channels();
  int in = 16;
  for (int l = 0; l < 4; ++l) {
    const std::string name = "stage" + std::to_string(l + 1);
    down_[l] = &add_module<nn::ConvBnRelu>(name + ".down", conv(in, widths[l], 3, 2), rng);
    refine_[l] = &add_module<nn::ConvBnRelu>(name + ".refine", conv(widths[l], widths[l], 3), rng);
    in = widths[l];
  }
}

std::array<Var, 4> TinyEncoder::forward(const Var& image) {
  std::array<Var, 4> out;
  Var h = stem_.forward(image);
  for (int l = 0; l < 4; ++l) {
    h = refine_[l]->forward(down_[l]->forward(h));
    out[l] = h;
  }
  return out;
}

// ---------------------------------------------------------------------------
// ResNet-50

class ResNet50Encoder::Bottleneck : public nn::Module {
 public:
  Bottleneck(int in, int planes, int stride, nn::Rng& rng)
      : conv1_(add_module<nn::Conv2d>("conv1", conv(in, planes, 1), rng)),
        bn1_(add_module<nn::BatchNorm2d>("bn1", planes)),
        conv2_(add_module<nn::Conv2d>("conv2", conv(planes, planes, 3, stride), rng)),
        bn2_(add_module<nn::BatchNorm2d>("bn2", planes)),
        conv3_(add_module<nn::Conv2d>("conv3", conv(planes, planes * 4, 1), rng)),
        bn3_(add_module<nn::BatchNorm2d>("bn3", planes * 4)) {
    if (stride != 1 || in != planes * 4) {
      down_conv_ = &add_module<nn::Conv2d>("downsample.0", conv(in, planes * 4, 1, stride), rng);
      down_bn_ = &add_module<nn::BatchNorm2d>("downsample.1", planes * 4);
    }
  }

  Var forward(const Var& x) {
    Var h = ops::relu(bn1_.forward(conv1_.forward(x)));
    h = ops::relu(bn2_.forward(conv2_.forward(h)));
    h = bn3_.forward(conv3_.forward(h));
    Var identity = down_conv_ ? down_bn_->forward(down_conv_->forward(x)) : x;
    return ops::relu(ops::add(h, identity));
  }

 private:
  nn::Conv2d& conv1_;
  nn::BatchNorm2d& bn1_;
  nn::Conv2d& conv2_;
  nn::BatchNorm2d& bn2_;
  nn::Conv2d& conv3_;
  nn::BatchNorm2d& bn3_;
  nn::Conv2d* down_conv_ = nullptr;
  nn::BatchNorm2d* down_bn_ = nullptr;
};

ResNet50Encoder::ResNet50Encoder(nn::Rng& rng)
    : conv1_(add_module<nn::Conv2d>("conv1", conv(3, 64, 7, 2), rng)),
      bn1_(add_module<nn::BatchNorm2d>("bn1", 64)) {
  constexpr std::array<int, 4> kBlocks{3, 4, 6, 3};
  constexpr std::array<int, 4> kPlanes{64, 128, 256, 512};
  int in = 64;
  for (int l = 0; l < 4; ++l) {
    for (int b = 0; b < kBlocks[l]; ++b) {
      const int stride = (b == 0 && l > 0) ? 2 : 1;
      layers_[l].push_back(&add_module<Bottleneck>(
          "layer" + std::to_string(l + 1) + "." + std::to_string(b), in,
          kPlanes[l], stride, rng));
      in = kPlanes[l] * 4;
    }
  }
}

std::array<Var, 4> ResNet50Encoder::forward(const Var& image) {
  Var h = ops::relu(bn1_.forward(conv1_.forward(image)));
  h = ops::max_pool2d(h, 3, 2, 1);
  std::array<Var, 4> out;
  for (int l = 0; l < 4; ++l) {
    for (auto* block : layers_[l]) h = block->forward(h);
    out[l] = h;
  }
  return out;
}

std::size_t ResNet50Encoder::load_weights(const std::string& path) {
  const TensorArchive archive = read_archive(path);
  std::size_t copied = 0;
  auto copy = [&](const std::string& name, Tensor& dst) {
    const Tensor* src = archive.find(name);
    if (!src) return;
    if (src->size() != dst.size()) {
      throw DimensionError("backbone weight '" + name + "' has " +
                           std::to_string(src->size()) + " values, expected " +
                           std::to_string(dst.size()));
    }
    std::copy(src->data(), src->data() + src->size(), dst.data());
    ++copied;
  };
  for (auto& p : named_parameters()) copy(p.name, p.param->value());
  for (auto& b : named_buffers()) copy(b.name, *b.buffer);
  return copied;
}

std::unique_ptr<Encoder> make_encoder(const ModelConfig& config, nn::Rng& rng) {
  switch (config.backbone) {
    case Backbone::kTinyEncoder:
      return std::make_unique<TinyEncoder>(rng);
    case Backbone::kResNet50: {
      auto enc = std::make_unique<ResNet50Encoder>(rng);
      if (!config.backbone_weights.empty()) enc->load_weights(config.backbone_weights);
      return enc;
    }
  }
  throw ConfigError("unknown backbone");
}

std::vector<FeatureMap> extract_features(Encoder& encoder, const Var& image) {
  check_image_shape(image->shape());
  const auto levels = encoder.forward(image);
  const auto widths = encoder.channels();
  const Shape is = image->shape();
  std::vector<FeatureMap> out;
  for (int l = 0; l < 4; ++l) {
    FeatureMap f{levels[l], l + 1};
    const Shape s = f.shape();
    if (s.c != widths[l] || s.h != is.h / f.stride() || s.w != is.w / f.stride()) {
      throw DimensionError("encoder level " + std::to_string(l + 1) +
                           " produced " + s.str());
    }
    out.push_back(f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Channel reduction

ChannelReducer::ChannelReducer(const std::array<int, 4>& in_channels,
                               const ModelConfig& config, nn::Rng& rng)
    : in_(in_channels) {
  for (int l = 0; l < 4; ++l) {
    out_[l] = config.reduced_width(l + 1);
    layers_[l] = &add_module<nn::ConvBnRelu>("level" + std::to_string(l + 1),
                                             conv(in_[l], out_[l], 3), rng);
  }
}

FeatureMap ChannelReducer::forward(const FeatureMap& feature) {
  if (feature.level < 1 || feature.level > 4) {
    throw DimensionError("reduce_channels: level must be in 1..4");
  }
  if (feature.shape().c != in_[feature.level - 1]) {
    throw DimensionError("reduce_channels: level " + std::to_string(feature.level) +
                         " expects " + std::to_string(in_[feature.level - 1]) +
                         " channels, got " + feature.shape().str());
  }
  return {layers_[feature.level - 1]->forward(feature.data), feature.level};
}

// ---------------------------------------------------------------------------
// Full network

PFNet::PFNet(const ModelConfig& config, std::uint64_t seed)
    : config_(validated(config)),
      rng_(seed),
      encoder_(&adopt_module("encoder", make_encoder(config_, rng_))),
      reducer_(add_module<ChannelReducer>("reduce", encoder_->channels(), config_, rng_)),
      positioning_(add_module<PositioningModule>("positioning",
                                                 config_.reduced_width(4), config_, rng_)) {
  for (int level = 3; level >= 1; --level) {
    focus_[level - 1] = &add_module<FocusModule>(
        "focus" + std::to_string(level), config_.reduced_width(level),
        config_.reduced_width(level + 1), config_, rng_);
  }
}

std::vector<FeatureMap> PFNet::extract_features(const Var& image) {
  return pfnet::extract_features(*encoder_, image);
}

FeatureMap PFNet::reduce_channels(const FeatureMap& feature) {
  return reducer_.forward(feature);
}

ForwardOutput PFNet::forward(const Var& image) {
  const auto features = extract_features(image);
  std::array<FeatureMap, 4> reduced;
  for (int l = 0; l < 4; ++l) reduced[l] = reduce_channels(features[l]);

  ForwardOutput out;
  auto pm = positioning_.forward(reduced[3].data);
  out.pm = {pm.logits, 32};
  Var higher = pm.features;
  Var higher_pred = pm.logits;
  for (int level = 3; level >= 1; --level) {
    auto fm = focus_[level - 1]->forward(reduced[level - 1].data, higher, higher_pred);
    out.fm[3 - level] = {fm.logits, reduced[level - 1].stride()};
    higher = fm.features;
    higher_pred = fm.logits;
  }
  const Shape is = image->shape();
  out.final_logits = ops::upsample_bilinear(higher_pred, is.h, is.w);
  out.final_prob = out.final_logits->value;
  for (auto& v : out.final_prob.values()) v = stable_sigmoid(v);
  return out;
}

ForwardOutput PFNet::infer(const Tensor& image) {
  NoGradGuard no_grad;
  const bool was_training = training();
  set_training(false);
  ForwardOutput out = forward(constant(image));
  set_training(was_training);
  return out;
}

}  // namespace pfnet
