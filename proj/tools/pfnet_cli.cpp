// pfnet: train, predict, eval, synth and ablate subcommands.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pfnet/config.hpp"
#include "pfnet/data.hpp"
#include "pfnet/error.hpp"
#include "pfnet/harness.hpp"
#include "pfnet/image_io.hpp"
#include "pfnet/metrics.hpp"

namespace {

namespace fs = std::filesystem;
using namespace pfnet;

void write_json(const std::string& path, const nlohmann::json& j) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

ModelConfig load_model_config(const std::string& path) {
  return path.empty() ? ModelConfig{} : model_config_from(read_key_values(path));
}

TrainConfig load_train_config(const std::string& path) {
  return path.empty() ? TrainConfig{} : train_config_from(read_key_values(path));
}

void report_load_errors(const data::LoadResult& r) {
  for (const auto& e : r.errors) std::cerr << "warning: skipped " << e << '\n';
}

data::LoadResult load_or_throw(const std::string& root, int size) {
  data::LoadResult r = data::load_dataset(root, size);
  report_load_errors(r);
  if (r.samples.empty()) throw ConfigError("no image/mask pairs under " + root);
  return r;
}

void print_step(const StepRecord& s, long total) {
  if (s.step % 10 == 0 || s.step + 1 == total) {
    std::printf("step %5ld/%ld  epoch %3d  lr %.6g  loss %.5f\n", s.step + 1, total, s.epoch,
                s.lr, s.loss);
    std::fflush(stdout);
  }
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string model_config, train_config, data, out;
};

void run_train(const TrainArgs& a) {
  const ModelConfig mc = load_model_config(a.model_config);
  const TrainConfig tc = load_train_config(a.train_config);
  const auto set = load_or_throw(a.data, tc.image_size);
  const long total = total_steps(tc, set.samples.size());
  std::printf("training on %zu samples for %ld steps\n", set.samples.size(), total);
  TrainResult r = train(mc, tc, set.samples, [&](const StepRecord& s) { print_step(s, total); });
  fs::create_directories(a.out);
  save_checkpoint((fs::path(a.out) / "model.ckpt").string(), *r.model, tc);
  write_json((fs::path(a.out) / "train_log.json").string(), r.log.to_json());
  const auto report = evaluate_model(*r.model, set.samples, tc.image_size);
  write_json((fs::path(a.out) / "train_metrics.json").string(), report.to_json());
  std::printf("%s", report.to_table().c_str());
  std::printf("wrote %s\n", (fs::path(a.out) / "model.ckpt").c_str());
}

struct PredictArgs {
  std::string ckpt, input, output;
};

void run_predict(const PredictArgs& a) {
  Checkpoint ck = load_checkpoint(a.ckpt);
  const int size = ck.train_config.image_size;
  auto one = [&](const fs::path& in, const fs::path& out) {
    const Tensor p = predict(*ck.model, read_image_rgb(in.string()), size);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_png_gray(out.string(), p);
  };
  if (!fs::is_directory(a.input)) {
    one(a.input, a.output);
    return;
  }
  std::vector<fs::path> inputs;
  for (const auto& e : fs::directory_iterator(a.input))
    if (e.is_regular_file() && is_image_file(e.path())) inputs.push_back(e.path());
  std::sort(inputs.begin(), inputs.end());
  fs::create_directories(a.output);
  int failures = 0;
  for (const auto& in : inputs) {
    try {
      one(in, fs::path(a.output) / (in.stem().string() + ".png"));
    } catch (const std::exception& e) {
      std::cerr << "error: " << in.string() << ": " << e.what() << '\n';
      ++failures;
    }
  }
  std::printf("predicted %zu of %zu images into %s\n", inputs.size() - failures, inputs.size(),
              a.output.c_str());
  if (failures) throw IoError(std::to_string(failures) + " images failed");
}

struct EvalArgs {
  std::string pred_dir, gt_dir, report;
};

void run_eval(const EvalArgs& a) {
  const metrics::MetricReport r = metrics::evaluate_dirs(a.pred_dir, a.gt_dir);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& e : r.errors) std::cerr << "error: " << e << '\n';
  write_json(a.report, r.to_json());
  std::printf("%s", r.to_table().c_str());
}

struct SynthArgs {
  int n = 8;
  int size = 64;
  double delta = 0.4;
  std::uint64_t seed = 0;
  std::string texture = "noise-octaves", shape = "smooth-blob", out;
};

void run_synth(const SynthArgs& a) {
  if (a.n <= 0) throw ConfigError("--n must be positive");
  data::SynthSpec spec;
  spec.height = spec.width = a.size;
  spec.delta = a.delta;
  spec.seed = a.seed;
  spec.texture = data::parse_texture(a.texture);
  spec.region = data::parse_region(a.shape);
  data::write_dataset(a.out, data::generate_dataset(spec, a.n));
  std::printf("wrote %d samples to %s/{images,masks}\n", a.n, a.out.c_str());
}

struct AblateArgs {
  std::string variant, data, report, model_config, train_config;
};

void run_ablate(const AblateArgs& a) {
  if (a.variant.size() != 1) throw ConfigError("--variant must be one letter a..l");
  const ModelConfig base = load_model_config(a.model_config);
  const TrainConfig tc = load_train_config(a.train_config);
  const fs::path root(a.data);
  data::LoadResult train_set, eval_set;
  if (fs::is_directory(root / "train") && fs::is_directory(root / "test")) {
    train_set = load_or_throw((root / "train").string(), tc.image_size);
    eval_set = load_or_throw((root / "test").string(), tc.image_size);
  } else {
    std::cerr << "warning: " << a.data
              << " has no train/ and test/ split; evaluating on the training set\n";
    train_set = load_or_throw(a.data, tc.image_size);
    eval_set = train_set;
  }
  const long total = total_steps(tc, train_set.samples.size());
  std::printf("variant (%s) %s: %ld steps\n", a.variant.c_str(),
              variant_label(a.variant[0]).c_str(), total);
  const AblationResult r =
      run_ablation(a.variant[0], base, tc, train_set.samples, eval_set.samples);
  write_json(a.report, r.to_json());
  std::printf("%s", r.report.to_table().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PFNet camouflaged object segmentation"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model on an image/mask directory");
  train_cmd->add_option("--model-config", train_args.model_config, "Model key/value config")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--train-config", train_args.train_config, "Training key/value config")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--data", train_args.data, "Directory with images/ and masks/")
      ->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "Write prediction maps as 8-bit PNG");
  predict_cmd->add_option("--ckpt", predict_args.ckpt, "Checkpoint file")->required()
      ->check(CLI::ExistingFile);
  predict_cmd->add_option("--input", predict_args.input, "Image file or directory")->required()
      ->check(CLI::ExistingPath);
  predict_cmd->add_option("--output", predict_args.output, "Output PNG or directory")->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score prediction maps against masks");
  eval_cmd->add_option("--pred-dir", eval_args.pred_dir, "Prediction directory")->required();
  eval_cmd->add_option("--gt-dir", eval_args.gt_dir, "Ground-truth directory")->required();
  eval_cmd->add_option("--report", eval_args.report, "JSON report path")->required();

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic camouflage dataset");
  synth_cmd->add_option("--n", synth_args.n, "Number of samples")->capture_default_str();
  synth_cmd->add_option("--size", synth_args.size, "Square size, multiple of 32")
      ->capture_default_str();
  synth_cmd->add_option("--delta", synth_args.delta, "Difficulty in [0, 1], 0 is invisible")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth_args.seed, "Seed of the first sample")
      ->capture_default_str();
  synth_cmd->add_option("--texture", synth_args.texture, "noise-octaves or gabor-field")
      ->capture_default_str();
  synth_cmd->add_option("--shape", synth_args.shape, "ellipse or smooth-blob")
      ->capture_default_str();
  synth_cmd->add_option("--out", synth_args.out, "Output directory")->required();

  AblateArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and score one ablation variant");
  ablate_cmd->add_option("--variant", ablate_args.variant, "Variant letter a..l")->required()
      ->check(CLI::IsMember({"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"}));
  ablate_cmd->add_option("--data", ablate_args.data, "Dataset root (optionally train/ and test/)")
      ->required()->check(CLI::ExistingDirectory);
  ablate_cmd->add_option("--report", ablate_args.report, "JSON report path")->required();
  ablate_cmd->add_option("--model-config", ablate_args.model_config, "Base model config")
      ->check(CLI::ExistingFile);
  ablate_cmd->add_option("--train-config", ablate_args.train_config, "Training config")
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train_cmd) run_train(train_args);
    else if (*predict_cmd) run_predict(predict_args);
    else if (*eval_cmd) run_eval(eval_args);
    else if (*synth_cmd) run_synth(synth_args);
    else if (*ablate_cmd) run_ablate(ablate_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
