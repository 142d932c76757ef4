#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfnet/config.hpp"
#include "pfnet/data.hpp"
#include "pfnet/metrics.hpp"
#include "pfnet/model.hpp"

namespace pfnet {

/// base_lr * (1 - step / total_steps)^poly_power. Throws DomainError unless
/// 0 <= step <= total_steps and total_steps > 0.
double poly_lr(long step, long total_steps, const TrainConfig& config);

/// SGD with classical momentum and L2 weight decay folded into the gradient:
///   d = g + wd * p (decaying parameters only); buf = m * buf + d; p -= lr * buf.
/// Parameters that received no gradient are skipped.
class Sgd {
 public:
  Sgd(std::vector<nn::NamedParameter> params, double momentum, double weight_decay);
  void step(double lr);

 private:
  std::vector<nn::NamedParameter> params_;
  std::vector<Tensor> momentum_buffers_;
  double momentum_;
  double weight_decay_;
};

struct StepRecord {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;  // learning rate of the epoch's last iteration
  double mean_loss = 0.0;
};

struct TrainLog {
  long total_steps = 0;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  /// Learning rate at iteration t for t = 0..total_steps; the final entry is
  /// the terminal schedule value reached after the last update.
  std::vector<double> lr;

  nlohmann::json to_json() const;
};

struct TrainResult {
  std::unique_ptr<PFNet> model;
  TrainLog log;
};

using StepCallback = std::function<void(const StepRecord&)>;

/// Iterations per epoch: ceil(samples / batch_size); the last batch of an
/// epoch may be smaller. Throws ConfigError on an empty dataset and
/// DivergenceError on a non-finite loss.
TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const std::vector<data::Sample>& dataset,
                  const StepCallback& on_step = {});

long total_steps(const TrainConfig& config, std::size_t dataset_size);

/// Resizes `image` (1, 3, H, W) in [0, 1] to image_size squared, runs the
/// network in eval mode and resizes sigmoid(finest logits) back to (H, W).
Tensor predict(PFNet& model, const Tensor& image, int image_size);

/// Predicts every sample and scores it against its mask.
metrics::MetricReport evaluate_model(PFNet& model, const std::vector<data::Sample>& samples,
                                     int image_size);

// ---- checkpoints ----------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, PFNet& model, const TrainConfig& train_config);

struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  std::unique_ptr<PFNet> model;
};

/// Throws IoError when the file is unreadable, not a checkpoint, of another
/// version, or missing any parameter or buffer of the described model.
Checkpoint load_checkpoint(const std::string& path);

// ---- ablation -------------------------------------------------------------

/// Ablation rows 'a' .. 'l': flag sets of the five positioning/focus
/// switches applied on top of `base`. Throws ConfigError for other letters.
ModelConfig variant_config(char variant, const ModelConfig& base = {});
std::string variant_label(char variant);

struct AblationResult {
  char variant = 'l';
  std::string label;
  ModelConfig model_config;
  std::size_t parameter_count = 0;
  TrainLog log;
  metrics::MetricReport report;

  nlohmann::json to_json() const;
};

AblationResult run_ablation(char variant, const ModelConfig& base,
                            const TrainConfig& train_config,
                            const std::vector<data::Sample>& train_set,
                            const std::vector<data::Sample>& eval_set);

}  // namespace pfnet
