#include "pfnet/focus.hpp"

#include <algorithm>

#include "pfnet/error.hpp"

namespace pfnet {

namespace {

nn::ConvOptions cbr(int in, int out, int kernel, int dilation = 1) {
  nn::ConvOptions o;
  o.in_channels = in;
  o.out_channels = out;
  o.kernel = kernel;
  o.dilation = dilation;
  return o;
}

}  // namespace

void require_half_resolution(const Shape& current, const Shape& higher,
                             const char* what) {
  if (higher.n != current.n || higher.h * 2 != current.h ||
      higher.w * 2 != current.w) {
    throw DimensionError(std::string(what) + ": " + higher.str() +
                         " is not 2x coarser than " + current.str());
  }
}

SplitFeatures attentive_split(const Var& current, const Var& higher_pred) {
  const Shape cs = current->shape();
  require_half_resolution(cs, higher_pred->shape(), "attentive_split");
  if (higher_pred->shape().c != 1) {
    throw DimensionError("attentive_split: prediction must have one channel");
  }
  Var a = ops::sigmoid(ops::upsample_bilinear(higher_pred, cs.h, cs.w));
  // Broadcast the single-channel map across feature channels.
  Var wide = a;
  if (cs.c > 1) {
    std::vector<Var> copies(static_cast<std::size_t>(cs.c), a);
    wide = ops::concat_channels(copies);
  }
  return {ops::mul(current, wide), ops::mul(current, ops::one_minus(wide))};
}

ContextBranch::ContextBranch(int in_channels, int width, int kernel,
                             int dilation, nn::Rng& rng)
    : reduce_(add_module<nn::ConvBnRelu>("reduce", cbr(in_channels, width, 3), rng)),
      local_(add_module<nn::ConvBnRelu>("local", cbr(width, width, kernel), rng)),
      context_(add_module<nn::ConvBnRelu>("context", cbr(width, width, 3, dilation), rng)) {}

Var ContextBranch::forward(const Var& x, const Var& carry) {
  Var h = reduce_.forward(x);
  if (carry) h = ops::add(h, carry);
  return context_.forward(local_.forward(h));
}

ContextExploration::ContextExploration(int channels, nn::Rng& rng)
    : width_(std::max(1, channels / 4)),
      fusion_(add_module<nn::ConvBnRelu>("fusion", cbr(4 * width_, channels, 3), rng)) {
  for (int i = 0; i < 4; ++i) {
    branches_[i] = &add_module<ContextBranch>("branch" + std::to_string(i + 1),
                                              channels, width_, kKernels[i],
                                              kDilations[i], rng);
  }
}

Var ContextExploration::branch_output(const Var& x, int i) {
  Var carry;
  for (int b = 0; b <= i; ++b) carry = branches_[b]->forward(x, carry);
  return carry;
}

Var ContextExploration::forward(const Var& x) {
  std::array<Var, 4> outs;
  Var carry;
  for (int i = 0; i < 4; ++i) {
    carry = branches_[i]->forward(x, carry);
    outs[i] = carry;
  }
  return fusion_.forward(ops::concat_channels(outs));
}

DistractionRemoval::DistractionRemoval(int higher_channels, int channels,
                                       bool use_fpd, bool use_fnd, nn::Rng& rng)
    : use_fpd_(use_fpd),
      use_fnd_(use_fnd),
      adapt_(add_module<nn::ConvBnRelu>("adapt", cbr(higher_channels, channels, 3), rng)),
      br1_(add_module<nn::BnRelu>("removal_br", channels)),
      br2_(add_module<nn::BnRelu>("restore_br", channels)),
      alpha_(register_scalar("alpha", 1.0)),
      beta_(register_scalar("beta", 1.0)) {}

DistractionRemoval::Trace DistractionRemoval::forward_traced(const Var& higher,
                                                             const Var& fpd,
                                                             const Var& fnd) {
  Trace t;
  Var adapted = adapt_.forward(higher);
  const Shape hs = adapted->shape();
  t.upsampled = ops::upsample_bilinear(adapted, hs.h * 2, hs.w * 2);
  const Shape s = t.upsampled->shape();
  if (use_fpd_) {
    if (!fpd) throw DimensionError("distraction_removal: missing fpd features");
    require_same_shape(fpd->shape(), s, "distraction_removal fpd");
    t.removed_pre = ops::sub(t.upsampled, ops::scale(fpd, alpha_.var));
    t.removed = br1_.forward(t.removed_pre);
  } else {
    t.removed = t.upsampled;
  }
  if (use_fnd_) {
    if (!fnd) throw DimensionError("distraction_removal: missing fnd features");
    require_same_shape(fnd->shape(), s, "distraction_removal fnd");
    t.restored_pre = ops::add(t.removed, ops::scale(fnd, beta_.var));
    t.output = br2_.forward(t.restored_pre);
  } else if (use_fpd_) {
    t.output = t.removed;
  } else {
    t.output = br2_.forward(t.removed);
  }
  return t;
}

FocusModule::FocusModule(int channels, int higher_channels,
                         const ModelConfig& config, nn::Rng& rng)
    : use_split_(config.use_attentive_split),
      removal_(add_module<DistractionRemoval>("removal", higher_channels, channels,
                                              config.use_fpd_stream,
                                              config.use_fnd_stream, rng)),
      head_(add_module<PredictionHead>("head", channels, rng)) {
  if (config.use_fpd_stream) fp_ = &add_module<ContextExploration>("ce_fp", channels, rng);
  if (config.use_fnd_stream) fn_ = &add_module<ContextExploration>("ce_fn", channels, rng);
}

FocusModule::Output FocusModule::forward(const Var& current, const Var& higher,
                                         const Var& higher_pred) {
  require_half_resolution(current->shape(), higher->shape(), "focus_module");
  Var fg = current, bg = current;
  if (use_split_ && (fp_ || fn_)) {
    auto split = attentive_split(current, higher_pred);
    fg = split.foreground;
    bg = split.background;
  }
  Var fpd = fp_ ? fp_->forward(fg) : nullptr;
  Var fnd = fn_ ? fn_->forward(bg) : nullptr;
  Var refined = removal_.forward(higher, fpd, fnd);
  return {refined, head_.forward(refined)};
}

}  // namespace pfnet
