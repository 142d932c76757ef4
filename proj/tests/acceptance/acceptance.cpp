// Acceptance gate: one PASS/FAIL line per criterion; exit status 1 on any
// failure. `--only N` (repeatable) restricts the run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oracles/oracles.hpp"
#include "pfnet/data.hpp"
#include "pfnet/focus.hpp"
#include "pfnet/harness.hpp"
#include "pfnet/image_io.hpp"
#include "pfnet/losses.hpp"
#include "pfnet/metrics.hpp"
#include "pfnet/positioning.hpp"
#include "support/test_util.hpp"

namespace {

using namespace pfnet;
namespace fs = std::filesystem;
using testutil::random_mask;
using testutil::random_tensor;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Tensor map_tensor(const std::vector<std::vector<double>>& m) {
  Tensor t(Shape{1, 1, static_cast<int>(m.size()), static_cast<int>(m[0].size())});
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[0].size(); ++j) t.at(0, 0, i, j) = m[i][j];
  return t;
}

double max_map_diff(const Tensor& maps, const std::vector<std::vector<std::vector<double>>>& ref) {
  double d = 0.0;
  for (std::size_t b = 0; b < ref.size(); ++b)
    d = std::max(d, max_abs_diff(maps.batch_item(static_cast<int>(b)), map_tensor(ref[b])));
  return d;
}

Shape random_shape(testutil::Rng& rng, int max_c, int max_hw) {
  std::uniform_int_distribution<int> n(1, 2), c(1, max_c), hw(1, max_hw);
  return Shape{n(rng), c(rng), hw(rng), hw(rng)};
}

oracle::BnParams bn_params(nn::BatchNorm2d& bn) {
  return {bn.gamma().value(), bn.beta().value(), bn.running_mean(), bn.running_var()};
}

void randomize_bn(nn::BatchNorm2d& bn, testutil::Rng& rng) {
  bn.gamma().value() = random_tensor(bn.gamma().value().shape(), rng, 0.5, 1.5);
  bn.beta().value() = random_tensor(bn.beta().value().shape(), rng, -0.5, 0.5);
  bn.running_mean() = random_tensor(bn.running_mean().shape(), rng, -0.5, 0.5);
  bn.running_var() = random_tensor(bn.running_var().shape(), rng, 0.5, 2.0);
}

Tensor random_pred(const Tensor& gt, testutil::Rng& rng) {
  std::uniform_int_distribution<int> kind(0, 2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor p(gt.shape());
  const int k = kind(rng);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (k == 0) p[i] = u(rng);
    else if (k == 1) p[i] = u(rng) < 0.4 ? 1.0 : 0.0;
    else p[i] = std::clamp(0.7 * gt[i] + 0.3 * u(rng), 0.0, 1.0);
  }
  return p;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome attention_normalization() {
  const auto t0 = Clock::now();
  testutil::Rng rng(101);
  nn::Rng init(101);
  double worst_sum = 0.0, min_entry = 1.0;
  for (int t = 0; t < 50; ++t) {
    const Shape s = random_shape(rng, 12, 9);
    const Var x = constant(random_tensor(s, rng, -3, 3));
    ChannelAttention ca;
    ca.gamma().value()[0] = 0.5;
    SpatialAttention sa(s.c, init);
    sa.gamma().value()[0] = 0.5;
    for (const Tensor& map : {ca.forward_with_map(x).attention->value,
                              sa.forward_with_map(x).attention->value}) {
      worst_sum = std::max(worst_sum, testutil::max_row_sum_error(map));
      min_entry = std::min(min_entry, testutil::min_value(map));
    }
  }
  const double secs = seconds_since(t0);
  return {worst_sum <= 1e-6 && min_entry >= 0.0 && secs < 10.0,
          fmt("max |row sum - 1| = %.2e, min entry = %.2e, %.2f s", worst_sum, min_entry, secs)};
}

Outcome identity_degeneracies() {
  const auto t0 = Clock::now();
  testutil::Rng rng(202);
  nn::Rng init(202);
  double ca_dev = 0.0, sa_dev = 0.0, dr_dev = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Shape s = random_shape(rng, 10, 8);
    const Tensor x = random_tensor(s, rng, -2, 2);
    ChannelAttention ca;
    ca.gamma().value()[0] = 0.0;
    ca_dev = std::max(ca_dev, max_abs_diff(ca.forward(constant(x))->value, x));
    SpatialAttention sa(s.c, init);
    sa.gamma().value()[0] = 0.0;
    sa_dev = std::max(sa_dev, max_abs_diff(sa.forward(constant(x))->value, x));

    DistractionRemoval dr(s.c, 3, true, true, init);
    dr.set_training(t % 2 == 0);
    dr.alpha().value()[0] = 0.0;
    dr.beta().value()[0] = 0.0;
    const Shape fs{s.n, 3, 2 * s.h, 2 * s.w};
    const auto tr = dr.forward_traced(constant(x), constant(random_tensor(fs, rng)),
                                      constant(random_tensor(fs, rng)));
    dr_dev = std::max({dr_dev, max_abs_diff(tr.removed_pre->value, tr.upsampled->value),
                       max_abs_diff(tr.restored_pre->value, tr.removed->value)});
  }
  const double secs = seconds_since(t0);
  return {ca_dev == 0.0 && sa_dev == 0.0 && dr_dev == 0.0 && secs < 10.0,
          fmt("gamma=0: %.1e, gamma'=0: %.1e, (alpha,beta)=0: %.1e, %.2f s", ca_dev, sa_dev,
              dr_dev, secs)};
}

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  constexpr int kInstances = 100;
  constexpr double kTol = 1e-6;
  testutil::Rng rng(303);
  nn::Rng init(303);
  double ca = 0, sa = 0, dr = 0, bce = 0, iou = 0, wbce = 0, wiou = 0;
  double mae = 0, sm = 0, em = 0, wf = 0;
  for (int t = 0; t < kInstances; ++t) {
    {
      const Shape s = random_shape(rng, 8, 6);
      const Tensor x = random_tensor(s, rng, -2, 2);
      ChannelAttention block;
      block.gamma().value()[0] = 0.9;
      const auto out = block.forward_with_map(constant(x));
      const auto ref = oracle::channel_attention(x, 0.9);
      ca = std::max({ca, max_abs_diff(out.features->value, ref.features),
                     max_map_diff(out.attention->value, ref.maps)});
    }
    {
      const Shape s = random_shape(rng, 16, 6);
      const Tensor x = random_tensor(s, rng, -2, 2);
      SpatialAttention block(s.c, init);
      block.gamma().value()[0] = 0.8;
      const auto out = block.forward_with_map(constant(x));
      const auto ref = oracle::spatial_attention(
          x, block.query().weight().value(), block.query().bias()->value(),
          block.key().weight().value(), block.key().bias()->value(),
          block.value().weight().value(), block.value().bias()->value(), 0.8);
      sa = std::max({sa, max_abs_diff(out.features->value, ref.features),
                     max_map_diff(out.attention->value, ref.maps)});
    }
    {
      const bool fpd = t % 4 < 2, fnd = t % 2 == 0, training = t % 8 < 4;
      std::uniform_int_distribution<int> hw(1, 8), ch(1, 5);
      const int hc = ch(rng), c = ch(rng), h = hw(rng), w = hw(rng);
      DistractionRemoval block(hc, c, fpd, fnd, init);
      block.set_training(training);
      randomize_bn(block.adapt().bn(), rng);
      randomize_bn(block.removal_br().bn(), rng);
      randomize_bn(block.restore_br().bn(), rng);
      block.alpha().value()[0] = 0.6;
      block.beta().value()[0] = 1.4;
      const Tensor higher = random_tensor({2, hc, h, w}, rng);
      const Tensor f1 = random_tensor({2, c, 2 * h, 2 * w}, rng);
      const Tensor f2 = random_tensor({2, c, 2 * h, 2 * w}, rng);
      oracle::RemovalParams p;
      p.adapt_weight = block.adapt().conv().weight().value();
      p.adapt_bn = bn_params(block.adapt().bn());
      p.removal_bn = bn_params(block.removal_br().bn());
      p.restore_bn = bn_params(block.restore_br().bn());
      p.alpha = 0.6;
      p.beta = 1.4;
      p.use_fpd = fpd;
      p.use_fnd = fnd;
      p.training = training;
      dr = std::max(dr, max_abs_diff(block.forward(constant(higher), constant(f1), constant(f2))->value,
                                     oracle::distraction_removal(higher, f1, f2, p)));
    }
    {
      std::uniform_int_distribution<int> hw(2, 16);
      const Tensor gt = random_mask(2, hw(rng), hw(rng), rng);
      const Tensor x = random_tensor(gt.shape(), rng, -5, 5);
      const Tensor w = oracle::boundary_weights(gt);
      bce = std::max(bce, std::abs(losses::bce_loss(constant(x), gt)->value[0] - oracle::bce(x, gt)));
      iou = std::max(iou, std::abs(losses::iou_loss(constant(x), gt)->value[0] - oracle::iou(x, gt)));
      wbce = std::max(wbce, std::abs(losses::weighted_bce_loss(constant(x), gt)->value[0] -
                                     oracle::bce(x, gt, &w)));
      wiou = std::max(wiou, std::abs(losses::weighted_iou_loss(constant(x), gt)->value[0] -
                                     oracle::iou(x, gt, &w)));
    }
    {
      std::uniform_int_distribution<int> hw(2, 16);
      const Tensor gt = random_mask(1, hw(rng), hw(rng), rng);
      const Tensor p = random_pred(gt, rng);
      mae = std::max(mae, std::abs(metrics::mae(p, gt) - oracle::mae(p, gt)));
      sm = std::max(sm, std::abs(metrics::s_measure(p, gt) - oracle::s_measure(p, gt)));
      em = std::max(em, std::abs(metrics::e_measure_adaptive(p, gt) - oracle::e_measure_adaptive(p, gt)));
      wf = std::max(wf, std::abs(metrics::weighted_f_measure(p, gt) - oracle::weighted_f_measure(p, gt)));
    }
  }
  const double secs = seconds_since(t0);
  const double worst = std::max({ca, sa, dr, bce, iou, wbce, wiou, mae, sm, em, wf});
  return {worst <= kTol && secs < 120.0,
          fmt("%d instances each; CA %.1e SA %.1e DR %.1e BCE %.1e IoU %.1e wBCE %.1e wIoU %.1e "
              "M %.1e S %.1e E %.1e wF %.1e, %.1f s",
              kInstances, ca, sa, dr, bce, iou, wbce, wiou, mae, sm, em, wf, secs)};
}

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  testutil::Rng rng(404);
  nn::Rng init(404);
  const ModelConfig config;
  PositioningModule pm(8, config, init);
  FocusModule fm3(6, 8, config, init), fm2(5, 6, config, init), fm1(4, 5, config, init);
  pm.channel_attention()->gamma().value()[0] = 0.7;
  pm.spatial_attention()->gamma().value()[0] = 0.6;
  for (FocusModule* f : {&fm3, &fm2, &fm1}) {
    f->removal().alpha().value()[0] = 0.8;
    f->removal().beta().value()[0] = 1.1;
  }
  Var f4 = variable(random_tensor({2, 8, 2, 2}, rng));
  Var f3 = variable(random_tensor({2, 6, 4, 4}, rng));
  Var f2 = variable(random_tensor({2, 5, 8, 8}, rng));
  Var f1 = variable(random_tensor({2, 4, 16, 16}, rng));
  const Tensor gt = random_mask(2, 32, 32, rng, false);

  auto loss = [&] {
    const auto p = pm.forward(f4);
    const auto o3 = fm3.forward(f3, p.features, p.logits);
    const auto o2 = fm2.forward(f2, o3.features, o3.logits);
    const auto o1 = fm1.forward(f1, o2.features, o2.logits);
    const std::vector<Var> fine_to_coarse{o1.logits, o2.logits, o3.logits};
    return losses::overall_loss(p.logits, fine_to_coarse, gt);
  };
  backward(loss());
  auto eval = [&] {
    NoGradGuard g;
    return loss()->value[0];
  };
  double worst = 0.0;
  std::size_t probes = 0;
  auto check = [&](Tensor& value, const Tensor& grad, std::size_t entries) {
    const auto r = testutil::check_gradient(value, grad, eval, entries);
    worst = std::max(worst, r.max_relative_error);
    probes += r.checked;
  };
  for (Var* v : {&f4, &f3, &f2, &f1}) check((*v)->value, (*v)->grad, 24);
  for (nn::Module* m : std::initializer_list<nn::Module*>{&pm, &fm3, &fm2, &fm1})
    for (auto& p : m->named_parameters()) check(p.param->value(), p.param->var->grad, 4);
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 120.0,
          fmt("%zu probes through PM and FM3..FM1, max relative error %.2e, %.1f s", probes,
              worst, secs)};
}

Outcome loss_weighting() {
  const double unit = losses::combine(1.0, {1.0, 1.0, 1.0});
  // An empty mask has unit boundary weights, so all four components coincide.
  const Tensor gt(Shape{1, 1, 4, 4});
  const Var empty = constant(Tensor(gt.shape()));
  losses::LossBreakdown parts;
  const std::vector<Var> maps{empty, empty, empty};
  losses::overall_loss(empty, maps, gt, {}, &parts);
  const double ratio = parts.total / parts.pm;
  const bool equal = parts.fm[0] == parts.pm && parts.fm[1] == parts.pm && parts.fm[2] == parts.pm;
  return {unit == 8.0 && equal && std::abs(ratio - 8.0) < 1e-12,
          fmt("combine(1; 1, 1, 1) = %.17g, equal components give total/component = %.15g", unit,
              ratio)};
}

Outcome metric_identity_suite() {
  const fs::path dir = fs::temp_directory_path() /
                       ("pfnet_acceptance_gt_" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  const auto set = data::generate_dataset(data::SynthSpec{.seed = 606}, 12);
  for (const auto& s : set) write_png_gray((dir / (s.name + ".png")).string(), s.mask);
  testutil::Rng rng(606);
  for (int t = 0; t < 4; ++t) {
    write_png_gray((dir / ("random_" + std::to_string(t) + ".png")).string(),
                   random_mask(1, 24, 40, rng, false));
  }
  const metrics::MetricReport r = metrics::evaluate_dirs(dir.string(), dir.string());
  fs::remove_all(dir);
  const auto& m = r.mean;
  const bool ok = r.per_image.size() == 16 && r.errors.empty() &&
                  std::abs(m.s_alpha - 1.0) <= 1e-6 && std::abs(m.e_ad - 1.0) <= 1e-6 &&
                  std::abs(m.wf - 1.0) <= 1e-6 && std::abs(m.mae) <= 1e-6;
  return {ok, fmt("%zu masks: S %.9f  E %.9f  wF %.9f  M %.2e", r.per_image.size(), m.s_alpha,
                  m.e_ad, m.wf, m.mae)};
}

Outcome overfit() {
  const auto set = data::generate_dataset(
      data::SynthSpec{.height = 64, .width = 64, .delta = 0.4, .seed = 700}, 8);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.max_steps = 200;
  tc.image_size = 64;
  tc.seed = 1;
  tc.augment = false;
  const auto t0 = Clock::now();
  TrainResult a = train(ModelConfig{}, tc, set);
  const double secs = seconds_since(t0);
  const metrics::MetricReport report = evaluate_model(*a.model, set, 64);
  TrainResult b = train(ModelConfig{}, tc, set);
  bool same = a.log.steps.size() == b.log.steps.size();
  for (std::size_t i = 0; same && i < a.log.steps.size(); ++i)
    same = a.log.steps[i].loss == b.log.steps[i].loss;
  const bool ok = report.mean.mae < 0.05 && report.mean.s_alpha > 0.9 && same && secs < 300.0;
  return {ok, fmt("MAE %.4f, S %.4f, final loss %.4f, rerun %s, %.1f s per run",
                  report.mean.mae, report.mean.s_alpha, a.log.steps.back().loss,
                  same ? "identical" : "DIFFERS", secs)};
}

Outcome ablation_liveness() {
  const auto set = data::generate_dataset(data::SynthSpec{.seed = 800}, 2);
  Tensor images(Shape{2, 3, 64, 64}), masks(Shape{2, 1, 64, 64});
  for (int b = 0; b < 2; ++b) {
    std::copy(set[b].image.data(), set[b].image.data() + set[b].image.size(),
              images.data() + b * set[b].image.size());
    std::copy(set[b].mask.data(), set[b].mask.data() + set[b].mask.size(),
              masks.data() + b * set[b].mask.size());
  }
  std::string detail;
  std::size_t params_a = 0, params_l = 0;
  int live = 0;
  for (char v = 'a'; v <= 'l'; ++v) {
    try {
      PFNet net(variant_config(v), 8);
      const ForwardOutput out = net.forward(constant(normalize_image(images)));
      const std::vector<Var> fm{out.fm[2].data, out.fm[1].data, out.fm[0].data};
      const Var loss = losses::overall_loss(out.pm.data, fm, masks);
      backward(loss);
      bool grads = false;
      for (auto& p : net.named_parameters()) grads = grads || !p.param->var->grad.empty();
      if (std::isfinite(loss->value[0]) && grads) ++live;
      if (v == 'a') params_a = net.parameter_count();
      if (v == 'l') params_l = net.parameter_count();
    } catch (const std::exception& e) {
      detail += fmt(" (%c) threw: %s;", v, e.what());
    }
  }
  return {live == 12 && params_l > params_a,
          fmt("%d/12 variants ran forward+backward; params (a) %zu < (l) %zu%s", live, params_a,
              params_l, detail.c_str())};
}

Outcome poly_schedule() {
  TrainConfig tc;
  tc.batch_size = 2;
  tc.max_steps = 10;
  tc.image_size = 32;
  tc.seed = 9;
  const auto set = data::generate_dataset(data::SynthSpec{.height = 32, .width = 32, .seed = 900}, 4);
  const TrainResult r = train(ModelConfig{}, tc, set);
  const long T = r.log.total_steps;
  auto closed = [&](long t) { return tc.base_lr * std::pow(1.0 - double(t) / double(T), 0.9); };
  const double l0 = r.log.lr.at(0), lh = r.log.lr.at(T / 2), lt = r.log.lr.at(T);
  const bool exact = l0 == closed(0) && lh == closed(T / 2) && lt == closed(T) && lt == 0.0;
  const bool derived = std::abs(lh - 5.359e-4) < 5e-8;
  const bool api = poly_lr(0, 1000, tc) == 0.001 && poly_lr(500, 1000, tc) == closed(5) &&
                   poly_lr(1000, 1000, tc) == 0.0;
  return {exact && derived && api,
          fmt("T = %ld: lr(0) = %.6g, lr(T/2) = %.6g, lr(T) = %.6g", T, l0, lh, lt)};
}

Outcome difficulty_monotonicity() {
  const auto t0 = Clock::now();
  const auto train_set = data::generate_dataset(
      data::SynthSpec{.height = 64, .width = 64, .delta = 0.6, .seed = 10000}, 16);
  const auto held_out = data::generate_dataset(
      data::SynthSpec{.height = 64, .width = 64, .delta = 0.6, .seed = 20000}, 8);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.max_steps = 200;
  tc.image_size = 64;
  tc.seed = 10;
  PFNet untrained(ModelConfig{}, tc.seed);
  untrained.set_training(false);
  const double before = evaluate_model(untrained, held_out, 64).mean.mae;
  TrainResult r = train(ModelConfig{}, tc, train_set);
  const double after = evaluate_model(*r.model, held_out, 64).mean.mae;
  const double reduction = 1.0 - after / before;
  return {reduction >= 0.5,
          fmt("held-out MAE untrained %.4f -> trained %.4f (reduction %.1f%%), %.1f s", before,
              after, 100.0 * reduction, seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PFNet acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criteria (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"attention normalization", attention_normalization},
      {"identity degeneracies", identity_degeneracies},
      {"oracle equivalence", oracle_equivalence},
      {"gradient checks", gradient_checks},
      {"loss weighting", loss_weighting},
      {"metric identity suite", metric_identity_suite},
      {"overfit", overfit},
      {"ablation matrix liveness", ablation_liveness},
      {"poly schedule", poly_schedule},
      {"difficulty monotonicity", difficulty_monotonicity},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("[%s] %2d %-26s %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
