#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

#include "pfnet/model_config.hpp"

namespace pfnet {

/// Optimisation recipe: SGD with momentum, weight decay and a poly schedule.
struct TrainConfig {
  double base_lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double poly_power = 0.9;
  int batch_size = 4;
  int epochs = 45;
  /// When positive, training stops after this many iterations and the
  /// schedule spans exactly this many.
  long max_steps = 0;
  std::uint64_t seed = 0;
  int image_size = 64;
  bool augment = true;

  /// Throws ConfigError on non-positive sizes or rates, or an image size that
  /// is not a multiple of 32.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// `key = value` lines; blank lines and lines starting with '#' are ignored.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::string_view text);
KeyValues read_key_values(const std::string& path);
std::string format_key_values(const KeyValues& kv);

/// Unknown keys and malformed values throw ConfigError. Missing keys keep
/// their defaults.
ModelConfig model_config_from(const KeyValues& kv);
TrainConfig train_config_from(const KeyValues& kv);
KeyValues to_key_values(const ModelConfig& config);
KeyValues to_key_values(const TrainConfig& config);

nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const TrainConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace pfnet
