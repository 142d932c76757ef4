#include <gtest/gtest.h>

#include <filesystem>

#include "pfnet/archive.hpp"
#include "pfnet/error.hpp"
#include "pfnet/harness.hpp"
#include "pfnet/model.hpp"
#include "support/test_util.hpp"

namespace pfnet {
namespace {

using testutil::random_tensor;

Tensor image(int n, int h, int w, std::uint64_t seed = 1) {
  testutil::Rng rng(seed);
  return random_tensor({n, 3, h, w}, rng, -2, 2);
}

TEST(ModelConfig, ParsesBackboneNames) {
  EXPECT_EQ(parse_backbone("tiny-encoder"), Backbone::kTinyEncoder);
  EXPECT_EQ(parse_backbone("resnet50-adapter"), Backbone::kResNet50);
  EXPECT_THROW(parse_backbone("vgg16"), ConfigError);
}

TEST(ModelConfig, ReducedWidths) {
  ModelConfig c;
  EXPECT_EQ(c.reduced_width(1), 16);
  EXPECT_EQ(c.reduced_width(4), 128);
  c.width_multiplier = 0.001;
  EXPECT_EQ(c.reduced_width(1), 1);
  c.width_multiplier = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.width_multiplier = 1.0;
  c.reduced_channels[2] = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Encoder, TinyLevelShapes) {
  nn::Rng rng(1);
  TinyEncoder enc(rng);
  const auto f = extract_features(enc, constant(image(1, 64, 64)));
  ASSERT_EQ(f.size(), 4u);
  const int sizes[] = {16, 8, 4, 2};
  const int channels[] = {16, 32, 64, 128};
  for (int l = 0; l < 4; ++l) {
    EXPECT_EQ(f[l].level, l + 1);
    EXPECT_EQ(f[l].stride(), 4 << l);
    EXPECT_EQ(f[l].shape(), (Shape{1, channels[l], sizes[l], sizes[l]}));
  }
}

TEST(Encoder, FullResolutionLevelShapes) {
  nn::Rng rng(2);
  TinyEncoder enc(rng);
  enc.set_training(false);
  NoGradGuard guard;
  const auto f = extract_features(enc, constant(image(1, 416, 416)));
  const int sizes[] = {104, 52, 26, 13};
  for (int l = 0; l < 4; ++l) EXPECT_EQ(f[l].shape().h, sizes[l]);
}

TEST(Encoder, SmallestValidInputIsAccepted) {
  nn::Rng rng(3);
  TinyEncoder enc(rng);
  const auto f = extract_features(enc, constant(image(2, 32, 32)));
  EXPECT_EQ(f[3].shape(), (Shape{2, 128, 1, 1}));
}

TEST(Encoder, RejectsNonDivisibleInput) {
  nn::Rng rng(4);
  TinyEncoder enc(rng);
  EXPECT_THROW(extract_features(enc, constant(image(1, 100, 100))), DimensionError);
  EXPECT_THROW(extract_features(enc, constant(image(1, 64, 48))), DimensionError);
  EXPECT_THROW(extract_features(enc, constant(Tensor(Shape{1, 1, 64, 64}))), DimensionError);
}

TEST(Encoder, ResNet50LevelShapes) {
  nn::Rng rng(5);
  ResNet50Encoder enc(rng);
  enc.set_training(false);
  NoGradGuard guard;
  const auto f = extract_features(enc, constant(image(1, 64, 64)));
  const int channels[] = {256, 512, 1024, 2048};
  for (int l = 0; l < 4; ++l) {
    EXPECT_EQ(f[l].shape(), (Shape{1, channels[l], 16 >> l, 16 >> l}));
  }
  const auto params = enc.named_parameters();
  EXPECT_EQ(params.front().name, "conv1.weight");
  bool has_downsample = false;
  for (const auto& p : params) has_downsample |= p.name == "layer2.0.downsample.0.weight";
  EXPECT_TRUE(has_downsample);
}

TEST(Encoder, ResNet50LoadsWeightsByName) {
  nn::Rng rng(6);
  ResNet50Encoder enc(rng);
  const auto path = (std::filesystem::temp_directory_path() / "pfnet_r50_partial.pfnt").string();
  TensorArchive archive;
  archive.tensors.emplace_back("conv1.weight", Tensor(Shape{64, 3, 7, 7}, 0.25));
  archive.tensors.emplace_back("bn1.running_var", Tensor(Shape{64, 1, 1, 1}, 3.0));
  archive.tensors.emplace_back("fc.weight", Tensor(Shape{10, 1, 1, 1}, 1.0));
  write_archive(path, archive);
  EXPECT_EQ(enc.load_weights(path), 2u);
  for (const auto& p : enc.named_parameters()) {
    if (p.name == "conv1.weight") {
      EXPECT_EQ(p.param->value()[17], 0.25);
    }
  }

  archive.tensors = {{"conv1.weight", Tensor(Shape{1, 1, 1, 5})}};
  write_archive(path, archive);
  EXPECT_THROW(enc.load_weights(path), DimensionError);
  std::filesystem::remove(path);
}

TEST(ChannelReducer, OutputWidths) {
  ModelConfig c;
  c.width_multiplier = 1.0;
  nn::Rng rng(7);
  ChannelReducer reducer({256, 512, 1024, 2048}, c, rng);
  reducer.set_training(false);
  NoGradGuard guard;
  const FeatureMap out = reducer.forward({constant(Tensor(Shape{1, 2048, 13, 13})), 4});
  EXPECT_EQ(out.shape(), (Shape{1, 512, 13, 13}));
  EXPECT_THROW(reducer.forward({constant(Tensor(Shape{1, 100, 13, 13})), 4}), DimensionError);
  EXPECT_THROW(reducer.forward({constant(Tensor(Shape{1, 100, 13, 13})), 5}), DimensionError);

  ModelConfig desk;
  ChannelReducer small({16, 32, 64, 128}, desk, rng);
  EXPECT_EQ(small.out_channels(1), 16);
}

TEST(ChannelReducer, ZeroWeightsGiveZeroPreActivation) {
  nn::Rng rng(8);
  ChannelReducer reducer({16, 32, 64, 128}, ModelConfig{}, rng);
  reducer.layer(2).conv().weight().value().fill(0.0);
  testutil::Rng trng(8);
  const Var pre = reducer.layer(2).conv().forward(constant(random_tensor({1, 32, 8, 8}, trng)));
  EXPECT_EQ(pre->value.max_abs(), 0.0);
}

TEST(PFNet, ForwardShapesAndStrides) {
  PFNet net(ModelConfig{}, 1);
  const auto out = net.forward(constant(image(1, 64, 64)));
  EXPECT_EQ(out.pm.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(out.pm.stride, 32);
  const int sizes[] = {4, 8, 16};
  const int strides[] = {16, 8, 4};
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(out.fm[k].shape(), (Shape{1, 1, sizes[k], sizes[k]}));
    EXPECT_EQ(out.fm[k].stride, strides[k]);
  }
  EXPECT_EQ(out.final_prob.shape(), (Shape{1, 1, 64, 64}));
  for (double v : out.final_prob.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(PFNet, EveryVariantProducesFourLogitMaps) {
  for (char v = 'a'; v <= 'l'; ++v) {
    PFNet net(variant_config(v), 2);
    const auto out = net.infer(image(2, 64, 64));
    EXPECT_EQ(out.pm.shape().h, 2) << v;
    EXPECT_EQ(out.fm[0].shape().h, 4) << v;
    EXPECT_EQ(out.fm[1].shape().h, 8) << v;
    EXPECT_EQ(out.fm[2].shape().h, 16) << v;
    EXPECT_TRUE(out.final_prob.all_finite()) << v;
  }
}

TEST(PFNet, FullModelHasMoreParametersThanBase) {
  PFNet base(variant_config('a'), 3), full(variant_config('l'), 3);
  EXPECT_GT(full.parameter_count(), base.parameter_count());
}

TEST(PFNet, DeterministicUnderSeed) {
  PFNet a(ModelConfig{}, 4), b(ModelConfig{}, 4);
  const Tensor x = image(1, 64, 64, 9);
  const auto ya = a.infer(x), yb = b.infer(x);
  EXPECT_EQ(max_abs_diff(ya.final_logits->value, yb.final_logits->value), 0.0);
  EXPECT_EQ(max_abs_diff(a.infer(x).final_prob, ya.final_prob), 0.0);
}

TEST(PFNet, InferRestoresTrainingFlag) {
  PFNet net(ModelConfig{}, 5);
  net.set_training(true);
  net.infer(image(1, 32, 32));
  EXPECT_TRUE(net.training());
}

TEST(PFNet, FocusModulesAtExpectedLevels) {
  PFNet net(ModelConfig{}, 6);
  EXPECT_EQ(net.focus(3).head().conv().weight().value().shape().c, 64);
  EXPECT_EQ(net.focus(1).head().conv().weight().value().shape().c, 16);
}

}  // namespace
}  // namespace pfnet
