#include "pfnet/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pfnet/archive.hpp"
#include "pfnet/error.hpp"
#include "pfnet/image_io.hpp"
#include "pfnet/losses.hpp"

namespace pfnet {

double poly_lr(long step, long total_steps, const TrainConfig& config) {
  if (total_steps <= 0) throw DomainError("poly_lr: total_steps must be positive");
  if (step < 0 || step > total_steps) {
    throw DomainError("poly_lr: step " + std::to_string(step) + " outside [0, " +
                      std::to_string(total_steps) + "]");
  }
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return config.base_lr * std::pow(1.0 - frac, config.poly_power);
}

Sgd::Sgd(std::vector<nn::NamedParameter> params, double momentum, double weight_decay)
    : params_(std::move(params)),
      momentum_buffers_(params_.size()),
      momentum_(momentum),
      weight_decay_(weight_decay) {}

void Sgd::step(double lr) {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    nn::Parameter& p = *params_[k].param;
    const Tensor& g = p.var->grad;
    if (g.empty()) continue;
    Tensor& value = p.value();
    Tensor& buf = momentum_buffers_[k];
    const bool first = buf.empty();
    if (first) buf = Tensor(value.shape());
    const double wd = p.decay ? weight_decay_ : 0.0;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double d = g[i] + wd * value[i];
      buf[i] = first ? d : momentum_ * buf[i] + d;
      value[i] -= lr * buf[i];
    }
  }
}

nlohmann::json TrainLog::to_json() const {
  nlohmann::json j;
  j["total_steps"] = total_steps;
  j["steps"] = nlohmann::json::array();
  for (const auto& s : steps) {
    j["steps"].push_back({{"step", s.step}, {"epoch", s.epoch}, {"lr", s.lr}, {"loss", s.loss}});
  }
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : epochs) {
    j["epochs"].push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"mean_loss", e.mean_loss}});
  }
  j["lr"] = lr;
  return j;
}

long total_steps(const TrainConfig& config, std::size_t dataset_size) {
  if (config.max_steps > 0) return config.max_steps;
  const long per_epoch =
      static_cast<long>((dataset_size + config.batch_size - 1) / config.batch_size);
  return per_epoch * config.epochs;
}

namespace {

Tensor at_size(const Tensor& t, int size) { return resize_bilinear(t, size, size); }

Tensor mask_at_size(const Tensor& mask, int size) {
  if (mask.shape().h == size && mask.shape().w == size) return mask;
  Tensor m = resize_bilinear(mask, size, size);
  for (auto& v : m.values()) v = v >= 0.5 ? 1.0 : 0.0;
  return m;
}

}  // namespace

TrainResult train(const ModelConfig& model_config, const TrainConfig& config,
                  const std::vector<data::Sample>& dataset, const StepCallback& on_step) {
  config.validate();
  if (dataset.empty()) throw ConfigError("train: empty dataset");

  TrainResult result;
  result.model = std::make_unique<PFNet>(model_config, config.seed);
  PFNet& model = *result.model;
  model.set_training(true);
  Sgd optimizer(model.named_parameters(), config.momentum, config.weight_decay);

  const long total = total_steps(config, dataset.size());
  TrainLog& log = result.log;
  log.total_steps = total;

  std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  long t = 0;
  for (int epoch = 0; t < total; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int epoch_steps = 0;
    for (std::size_t start = 0; start < order.size() && t < total;
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Tensor> images, masks;
      for (std::size_t k = start; k < end; ++k) {
        data::Sample s = dataset[order[k]];
        if (config.augment) s = data::apply_augment(s, data::draw_augment(rng));
        images.push_back(at_size(s.image, config.image_size));
        masks.push_back(mask_at_size(s.mask, config.image_size));
      }
      const Tensor gt = stack_batch(masks);
      const Var x = constant(normalize_image(stack_batch(images)));

      ForwardOutput out = model.forward(x);
      const std::vector<Var> fm{out.fm[2].data, out.fm[1].data, out.fm[0].data};
      Var loss = losses::overall_loss(out.pm.data, fm, gt);
      const double value = loss->value[0];
      if (!std::isfinite(value)) {
        throw DivergenceError("training diverged at step " + std::to_string(t) +
                              " (epoch " + std::to_string(epoch) + "): loss = " +
                              std::to_string(value));
      }
      model.zero_grad();
      backward(loss);
      const double lr = poly_lr(t, total, config);
      optimizer.step(lr);

      const StepRecord record{t, epoch, lr, value};
      log.steps.push_back(record);
      log.lr.push_back(lr);
      if (on_step) on_step(record);
      epoch_loss += value;
      ++epoch_steps;
      ++t;
    }
    log.epochs.push_back({epoch, log.lr.back(), epoch_loss / epoch_steps});
  }
  log.lr.push_back(poly_lr(total, total, config));
  model.zero_grad();
  model.set_training(false);
  return result;
}

Tensor predict(PFNet& model, const Tensor& image, int image_size) {
  const Shape s = image.shape();
  if (s.n != 1 || s.c != 3) throw DimensionError("predict: expected (1, 3, H, W), got " + s.str());
  const Tensor input = normalize_image(at_size(image, image_size));
  const ForwardOutput out = model.infer(input);
  Tensor prob = resize_bilinear(out.final_prob, s.h, s.w);
  for (auto& v : prob.values()) v = std::clamp(v, 0.0, 1.0);
  return prob;
}

metrics::MetricReport evaluate_model(PFNet& model, const std::vector<data::Sample>& samples,
                                     int image_size) {
  std::vector<std::string> names;
  std::vector<Tensor> preds, gts;
  for (const auto& s : samples) {
    names.push_back(s.name);
    preds.push_back(predict(model, s.image, image_size));
    gts.push_back(s.mask);
  }
  return metrics::evaluate_pairs(names, preds, gts);
}

// ---- checkpoints ----------------------------------------------------------

void save_checkpoint(const std::string& path, PFNet& model, const TrainConfig& train_config) {
  TensorArchive archive;
  archive.metadata = {{"format", "pfnet-checkpoint"},
                      {"checkpoint_version", kCheckpointVersion},
                      {"model_config", to_json(model.config())},
                      {"train_config", to_json(train_config)},
                      {"parameter_count", model.parameter_count()}};
  for (const auto& p : model.named_parameters()) archive.tensors.emplace_back(p.name, p.param->value());
  for (const auto& b : model.named_buffers()) archive.tensors.emplace_back(b.name, *b.buffer);
  write_archive(path, archive);
}

Checkpoint load_checkpoint(const std::string& path) {
  const TensorArchive archive = read_archive(path);
  const auto& meta = archive.metadata;
  if (!meta.is_object() || meta.value("format", "") != "pfnet-checkpoint") {
    throw IoError(path + " is not a checkpoint");
  }
  if (meta.value("checkpoint_version", -1) != kCheckpointVersion) {
    throw IoError(path + ": unsupported checkpoint version");
  }
  Checkpoint ck;
  try {
    ck.model_config = model_config_from_json(meta.at("model_config"));
    ck.train_config = train_config_from_json(meta.at("train_config"));
  } catch (const std::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  ModelConfig build = ck.model_config;
  build.backbone_weights.clear();
  ck.model = std::make_unique<PFNet>(build, 0);

  auto restore = [&](const std::string& name, Tensor& dst) {
    const Tensor* src = archive.find(name);
    if (!src) throw IoError(path + ": missing tensor '" + name + "'");
    if (!(src->shape() == dst.shape())) {
      throw IoError(path + ": tensor '" + name + "' has shape " + src->shape().str() +
                    ", expected " + dst.shape().str());
    }
    dst = *src;
  };
  for (auto& p : ck.model->named_parameters()) restore(p.name, p.param->value());
  for (auto& b : ck.model->named_buffers()) restore(b.name, *b.buffer);
  ck.model->set_training(false);
  return ck;
}

// ---- ablation -------------------------------------------------------------

namespace {

struct VariantRow {
  char id;
  const char* label;
  bool ca, sa, fpd, fnd, split;
};

constexpr VariantRow kVariants[] = {
    {'a', "B", false, false, false, false, false},
    {'b', "B+CA", true, false, false, false, false},
    {'c', "B+SA", false, true, false, false, false},
    {'d', "B+PM", true, true, false, false, false},
    {'e', "B+FPD", false, false, true, false, true},
    {'f', "B+FND", false, false, false, true, true},
    {'g', "B+FM w/o A", false, false, true, true, false},
    {'h', "B+FM", false, false, true, true, true},
    {'i', "B+PM+FPD", true, true, true, false, true},
    {'j', "B+PM+FND", true, true, false, true, true},
    {'k', "B+PM+FM w/o A", true, true, true, true, false},
    {'l', "PFNet", true, true, true, true, true},
};

const VariantRow& variant_row(char variant) {
  for (const auto& row : kVariants)
    if (row.id == variant) return row;
  throw ConfigError(std::string("unknown ablation variant '") + variant + "' (expected a..l)");
}

}  // namespace

ModelConfig variant_config(char variant, const ModelConfig& base) {
  const VariantRow& row = variant_row(variant);
  ModelConfig c = base;
  c.use_channel_attention = row.ca;
  c.use_spatial_attention = row.sa;
  c.use_fpd_stream = row.fpd;
  c.use_fnd_stream = row.fnd;
  c.use_attentive_split = row.split;
  return c;
}

std::string variant_label(char variant) { return variant_row(variant).label; }

nlohmann::json AblationResult::to_json() const {
  return {{"variant", std::string(1, variant)},
          {"label", label},
          {"model_config", pfnet::to_json(model_config)},
          {"parameter_count", parameter_count},
          {"final_loss", log.steps.empty() ? 0.0 : log.steps.back().loss},
          {"total_steps", log.total_steps},
          {"metrics", report.to_json()}};
}

AblationResult run_ablation(char variant, const ModelConfig& base,
                            const TrainConfig& train_config,
                            const std::vector<data::Sample>& train_set,
                            const std::vector<data::Sample>& eval_set) {
  AblationResult r;
  r.variant = variant;
  r.label = variant_label(variant);
  r.model_config = variant_config(variant, base);
  TrainResult trained = pfnet::train(r.model_config, train_config, train_set);
  r.parameter_count = trained.model->parameter_count();
  r.log = std::move(trained.log);
  r.report = evaluate_model(*trained.model, eval_set, train_config.image_size);
  return r;
}

}  // namespace pfnet
