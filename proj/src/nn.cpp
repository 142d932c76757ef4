#include "pfnet/nn.hpp"

#include <cmath>

#include "pfnet/error.hpp"

namespace pfnet::nn {

void Module::set_training(bool on) {
  training_ = on;
  for (auto& [name, child] : children_) child->set_training(on);
}

Parameter& Module::register_parameter(std::string name, Tensor init, bool decay) {
  auto p = std::make_unique<Parameter>();
  p->var = variable(std::move(init));
  p->decay = decay;
  Parameter& ref = *p;
  params_.emplace_back(std::move(name), std::move(p));
  return ref;
}

Tensor& Module::register_buffer(std::string name, Tensor init) {
  auto b = std::make_unique<Tensor>(std::move(init));
  Tensor& ref = *b;
  buffers_.emplace_back(std::move(name), std::move(b));
  return ref;
}

void Module::collect(const std::string& prefix, std::vector<NamedParameter>& out) {
  for (auto& [name, p] : params_) out.push_back({prefix + name, p.get()});
  for (auto& [name, child] : children_) child->collect(prefix + name + ".", out);
}

void Module::collect(const std::string& prefix, std::vector<NamedBuffer>& out) {
  for (auto& [name, b] : buffers_) out.push_back({prefix + name, b.get()});
  for (auto& [name, child] : children_) child->collect(prefix + name + ".", out);
}

std::vector<NamedParameter> Module::named_parameters() {
  std::vector<NamedParameter> out;
  collect("", out);
  return out;
}

std::vector<NamedBuffer> Module::named_buffers() {
  std::vector<NamedBuffer> out;
  collect("", out);
  return out;
}

std::size_t Module::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : named_parameters()) n += p.param->value().size();
  return n;
}

void Module::zero_grad() {
  for (auto& p : named_parameters()) p.param->var->grad = Tensor();
}

namespace {

Tensor init_tensor(Shape s, Init init, int fan_in, Rng& rng) {
  Tensor t(s);
  switch (init) {
    case Init::kHeNormal: {
      std::normal_distribution<double> d(0.0, std::sqrt(2.0 / fan_in));
      for (auto& v : t.values()) v = d(rng);
      break;
    }
    case Init::kUniformFanIn: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> d(-bound, bound);
      for (auto& v : t.values()) v = d(rng);
      break;
    }
    case Init::kZero:
      break;
  }
  return t;
}

ConvOptions without_bias(ConvOptions o) {
  o.bias = false;
  return o;
}

}  // namespace

Conv2d::Conv2d(const ConvOptions& o, Rng& rng) {
  if (o.in_channels <= 0 || o.out_channels <= 0 || o.kernel <= 0 ||
      o.stride <= 0 || o.dilation <= 0) {
    throw ConfigError("Conv2d: non-positive option");
  }
  geometry_.stride = o.stride;
  geometry_.dilation = o.dilation;
  geometry_.pad = o.pad >= 0 ? o.pad : o.dilation * (o.kernel - 1) / 2;
  const int fan_in = o.in_channels * o.kernel * o.kernel;
  weight_ = &register_parameter(
      "weight",
      init_tensor({o.out_channels, o.in_channels, o.kernel, o.kernel}, o.init,
                  fan_in, rng),
      true);
  if (o.bias) {
    bias_ = &register_parameter("bias", Tensor({o.out_channels, 1, 1, 1}), true);
  }
}

Var Conv2d::forward(const Var& x) const {
  return ops::conv2d(x, weight_->var, bias_ ? bias_->var : nullptr, geometry_);
}

BatchNorm2d::BatchNorm2d(int channels, double momentum, double eps)
    : momentum_(momentum), eps_(eps) {
  if (channels <= 0) throw ConfigError("BatchNorm2d: non-positive channels");
  gamma_ = &register_parameter("weight", Tensor::ones({channels, 1, 1, 1}), false);
  beta_ = &register_parameter("bias", Tensor::zeros({channels, 1, 1, 1}), false);
  running_mean_ = &register_buffer("running_mean", Tensor::zeros({channels, 1, 1, 1}));
  running_var_ = &register_buffer("running_var", Tensor::ones({channels, 1, 1, 1}));
}

Var BatchNorm2d::forward(const Var& x) {
  BatchNormState state{running_mean_, running_var_, momentum_, eps_};
  return ops::batch_norm(x, gamma_->var, beta_->var, state, training());
}

BnRelu::BnRelu(int channels) : bn_(add_module<BatchNorm2d>("bn", channels)) {}

Var BnRelu::forward(const Var& x) { return ops::relu(bn_.forward(x)); }

ConvBnRelu::ConvBnRelu(ConvOptions options, Rng& rng)
    : conv_(add_module<Conv2d>("conv", without_bias(options), rng)),
      bn_(add_module<BatchNorm2d>("bn", options.out_channels)) {}

Var ConvBnRelu::forward(const Var& x) {
  return ops::relu(bn_.forward(conv_.forward(x)));
}

}  // namespace pfnet::nn
