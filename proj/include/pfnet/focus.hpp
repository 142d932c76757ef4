#pragma once

// Focus module: splits current-level features with the upsampled
// higher-level prediction, mines false-positive / false-negative
// distractions with two context-exploration blocks, removes them from the
// upsampled higher-level features and predicts a refined map.

#include <array>

#include "pfnet/model_config.hpp"
#include "pfnet/nn.hpp"
#include "pfnet/positioning.hpp"

namespace pfnet {

struct SplitFeatures {
  Var foreground;  // A * current
  Var background;  // (1 - A) * current
};

/// A = sigmoid(upsample(higher_pred)); higher_pred must sit at exactly half
/// the spatial resolution of `current`.
SplitFeatures attentive_split(const Var& current, const Var& higher_pred);

/// Throws DimensionError unless `higher` is exactly 2x coarser than `current`.
void require_half_resolution(const Shape& current, const Shape& higher,
                             const char* what);

/// One context-exploration branch: 3x3 reduction, k x k local conv, 3x3
/// dilated conv, each CBR.
class ContextBranch : public nn::Module {
 public:
  ContextBranch(int in_channels, int width, int kernel, int dilation, nn::Rng& rng);
  /// `carry` is the previous branch's output (null for the first branch)
  /// and is added to the reduced input.
  Var forward(const Var& x, const Var& carry);

  nn::ConvBnRelu& reduce() { return reduce_; }
  nn::ConvBnRelu& local() { return local_; }
  nn::ConvBnRelu& context() { return context_; }

 private:
  nn::ConvBnRelu& reduce_;
  nn::ConvBnRelu& local_;
  nn::ConvBnRelu& context_;
};

/// Four chained branches (k = 1, 3, 5, 7; dilation 1, 2, 4, 8), concatenated
/// and fused by a 3x3 CBR back to the input width.
class ContextExploration : public nn::Module {
 public:
  static constexpr std::array<int, 4> kKernels{1, 3, 5, 7};
  static constexpr std::array<int, 4> kDilations{1, 2, 4, 8};

  ContextExploration(int channels, nn::Rng& rng);
  Var forward(const Var& x);

  /// Output of a single branch `i` (0-based) given the block input.
  Var branch_output(const Var& x, int i);
  ContextBranch& branch(int i) { return *branches_[i]; }
  nn::ConvBnRelu& fusion() { return fusion_; }
  int branch_width() const { return width_; }

 private:
  int width_;
  std::array<ContextBranch*, 4> branches_{};
  nn::ConvBnRelu& fusion_;
};

/// F_up = U(CBR(F_h));  F_r = BR(F_up - alpha F_fpd);  F'_r = BR(F_r + beta F_fnd).
///
/// A disabled stream drops its term together with its BR stage; with both
/// streams disabled a single BR is applied to F_up.
class DistractionRemoval : public nn::Module {
 public:
  struct Trace {
    Var upsampled;     // F_up
    Var removed_pre;   // F_up - alpha F_fpd, before BR (null if fpd off)
    Var removed;       // F_r
    Var restored_pre;  // F_r + beta F_fnd, before BR (null if fnd off)
    Var output;        // F'_r
  };

  DistractionRemoval(int higher_channels, int channels, bool use_fpd,
                     bool use_fnd, nn::Rng& rng);

  Var forward(const Var& higher, const Var& fpd, const Var& fnd) {
    return forward_traced(higher, fpd, fnd).output;
  }
  Trace forward_traced(const Var& higher, const Var& fpd, const Var& fnd);

  nn::Parameter& alpha() { return alpha_; }
  nn::Parameter& beta() { return beta_; }
  nn::ConvBnRelu& adapt() { return adapt_; }
  nn::BnRelu& removal_br() { return br1_; }
  nn::BnRelu& restore_br() { return br2_; }

 private:
  bool use_fpd_;
  bool use_fnd_;
  nn::ConvBnRelu& adapt_;
  nn::BnRelu& br1_;
  nn::BnRelu& br2_;
  nn::Parameter& alpha_;
  nn::Parameter& beta_;
};

class FocusModule : public nn::Module {
 public:
  struct Output {
    Var features;
    Var logits;
  };

  FocusModule(int channels, int higher_channels, const ModelConfig& config,
              nn::Rng& rng);
  Output forward(const Var& current, const Var& higher, const Var& higher_pred);

  ContextExploration* fp_block() { return fp_; }
  ContextExploration* fn_block() { return fn_; }
  DistractionRemoval& removal() { return removal_; }
  PredictionHead& head() { return head_; }

 private:
  bool use_split_;
  ContextExploration* fp_ = nullptr;
  ContextExploration* fn_ = nullptr;
  DistractionRemoval& removal_;
  PredictionHead& head_;
};

}  // namespace pfnet
