#pragma once

#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pfnet/autograd.hpp"

namespace pfnet::nn {

using Rng = std::mt19937_64;

/// A trainable tensor. `decay` marks whether SGD weight decay applies.
struct Parameter {
  Var var;
  bool decay = true;

  Tensor& value() { return var->value; }
  const Tensor& value() const { return var->value; }
};

struct NamedParameter {
  std::string name;
  Parameter* param;
};

struct NamedBuffer {
  std::string name;
  Tensor* buffer;
};

/// Base for layers and blocks. Owns its parameters, buffers and children;
/// names are dot-joined paths ("focus1.ce_fp.branch2.local.conv.weight").
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  void set_training(bool on);
  bool training() const { return training_; }

  std::vector<NamedParameter> named_parameters();
  std::vector<NamedBuffer> named_buffers();
  std::size_t parameter_count();
  void zero_grad();

 protected:
  Parameter& register_parameter(std::string name, Tensor init, bool decay);
  Tensor& register_buffer(std::string name, Tensor init);
  /// Learnable single-element scale (gamma, alpha, beta), exempt from decay.
  Parameter& register_scalar(std::string name, double init) {
    return register_parameter(std::move(name), Tensor::scalar(init), false);
  }

  template <typename M, typename... Args>
  M& add_module(std::string name, Args&&... args) {
    auto child = std::make_unique<M>(std::forward<Args>(args)...);
    M& ref = *child;
    children_.emplace_back(std::move(name), std::move(child));
    return ref;
  }

  template <typename M>
  M& adopt_module(std::string name, std::unique_ptr<M> child) {
    M& ref = *child;
    children_.emplace_back(std::move(name), std::move(child));
    return ref;
  }

 private:
  void collect(const std::string& prefix, std::vector<NamedParameter>& out);
  void collect(const std::string& prefix, std::vector<NamedBuffer>& out);

  bool training_ = true;
  std::vector<std::pair<std::string, std::unique_ptr<Parameter>>> params_;
  std::vector<std::pair<std::string, std::unique_ptr<Tensor>>> buffers_;
  std::vector<std::pair<std::string, std::unique_ptr<Module>>> children_;
};

enum class Init {
  kHeNormal,     // N(0, 2 / fan_in), for convolutions feeding BN + ReLU
  kUniformFanIn, // U(-1/sqrt(fan_in), 1/sqrt(fan_in)), for prediction heads
  kZero,
};

struct ConvOptions {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int pad = -1;  // -1: "same" padding dilation * (kernel - 1) / 2
  int dilation = 1;
  bool bias = false;
  Init init = Init::kHeNormal;
};

class Conv2d : public Module {
 public:
  Conv2d(const ConvOptions& options, Rng& rng);
  Var forward(const Var& x) const;

  Parameter& weight() { return *weight_; }
  Parameter* bias() { return bias_; }
  const kernels::ConvGeometry& geometry() const { return geometry_; }

 private:
  kernels::ConvGeometry geometry_;
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

class BatchNorm2d : public Module {
 public:
  explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5);
  Var forward(const Var& x);

  Parameter& gamma() { return *gamma_; }
  Parameter& beta() { return *beta_; }
  Tensor& running_mean() { return *running_mean_; }
  Tensor& running_var() { return *running_var_; }

 private:
  Parameter* gamma_;
  Parameter* beta_;
  Tensor* running_mean_;
  Tensor* running_var_;
  double momentum_;
  double eps_;
};

/// BN followed by ReLU ("BR").
class BnRelu : public Module {
 public:
  explicit BnRelu(int channels);
  Var forward(const Var& x);
  BatchNorm2d& bn() { return bn_; }

 private:
  BatchNorm2d& bn_;
};

/// Bias-free convolution, BN, ReLU ("CBR").
class ConvBnRelu : public Module {
 public:
  ConvBnRelu(ConvOptions options, Rng& rng);
  Var forward(const Var& x);
  Conv2d& conv() { return conv_; }
  BatchNorm2d& bn() { return bn_; }

 private:
  Conv2d& conv_;
  BatchNorm2d& bn_;
};

}  // namespace pfnet::nn
