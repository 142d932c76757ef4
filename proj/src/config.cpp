#include "pfnet/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "pfnet/error.hpp"

namespace pfnet {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value '" + value + "' for " + key);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw ConfigError("invalid boolean '" + value + "' for " + key);
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

std::string format_bool(bool v) { return v ? "true" : "false"; }

}  // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("train config: " + what);
  };
  require(base_lr > 0.0, "base_lr must be positive");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(poly_power > 0.0, "poly_power must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(epochs > 0, "epochs must be positive");
  require(max_steps >= 0, "max_steps must be non-negative");
  require(image_size > 0 && image_size % 32 == 0,
          "image_size must be a positive multiple of 32, got " + std::to_string(image_size));
}

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(number) + ": empty key");
    kv[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str());
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

ModelConfig model_config_from(const KeyValues& kv) {
  ModelConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "backbone") {
      c.backbone = parse_backbone(value);
    } else if (key == "reduced_channels") {
      std::istringstream in(value);
      std::string item;
      int i = 0;
      while (std::getline(in, item, ',')) {
        if (i >= 4) throw ConfigError("reduced_channels needs exactly 4 values");
        c.reduced_channels[i++] = parse_number<int>(key, trim(item));
      }
      if (i != 4) throw ConfigError("reduced_channels needs exactly 4 values");
    } else if (key == "width_multiplier") {
      c.width_multiplier = parse_number<double>(key, value);
    } else if (key == "use_channel_attention") {
      c.use_channel_attention = parse_bool(key, value);
    } else if (key == "use_spatial_attention") {
      c.use_spatial_attention = parse_bool(key, value);
    } else if (key == "use_fpd_stream") {
      c.use_fpd_stream = parse_bool(key, value);
    } else if (key == "use_fnd_stream") {
      c.use_fnd_stream = parse_bool(key, value);
    } else if (key == "use_attentive_split") {
      c.use_attentive_split = parse_bool(key, value);
    } else if (key == "backbone_weights") {
      c.backbone_weights = value;
    } else {
      throw ConfigError("unknown model config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

TrainConfig train_config_from(const KeyValues& kv) {
  TrainConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "base_lr") c.base_lr = parse_number<double>(key, value);
    else if (key == "momentum") c.momentum = parse_number<double>(key, value);
    else if (key == "weight_decay") c.weight_decay = parse_number<double>(key, value);
    else if (key == "poly_power") c.poly_power = parse_number<double>(key, value);
    else if (key == "batch_size") c.batch_size = parse_number<int>(key, value);
    else if (key == "epochs") c.epochs = parse_number<int>(key, value);
    else if (key == "max_steps") c.max_steps = parse_number<long>(key, value);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "image_size") c.image_size = parse_number<int>(key, value);
    else if (key == "augment") c.augment = parse_bool(key, value);
    else throw ConfigError("unknown train config key '" + key + "'");
  }
  c.validate();
  return c;
}

KeyValues to_key_values(const ModelConfig& c) {
  const auto& r = c.reduced_channels;
  KeyValues kv{
      {"backbone", to_string(c.backbone)},
      {"reduced_channels", std::to_string(r[0]) + "," + std::to_string(r[1]) + "," +
                               std::to_string(r[2]) + "," + std::to_string(r[3])},
      {"width_multiplier", format_double(c.width_multiplier)},
      {"use_channel_attention", format_bool(c.use_channel_attention)},
      {"use_spatial_attention", format_bool(c.use_spatial_attention)},
      {"use_fpd_stream", format_bool(c.use_fpd_stream)},
      {"use_fnd_stream", format_bool(c.use_fnd_stream)},
      {"use_attentive_split", format_bool(c.use_attentive_split)},
  };
  if (!c.backbone_weights.empty()) kv["backbone_weights"] = c.backbone_weights;
  return kv;
}

KeyValues to_key_values(const TrainConfig& c) {
  return {
      {"base_lr", format_double(c.base_lr)},
      {"momentum", format_double(c.momentum)},
      {"weight_decay", format_double(c.weight_decay)},
      {"poly_power", format_double(c.poly_power)},
      {"batch_size", std::to_string(c.batch_size)},
      {"epochs", std::to_string(c.epochs)},
      {"max_steps", std::to_string(c.max_steps)},
      {"seed", std::to_string(c.seed)},
      {"image_size", std::to_string(c.image_size)},
      {"augment", format_bool(c.augment)},
  };
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"backbone", to_string(c.backbone)},
          {"reduced_channels", c.reduced_channels},
          {"width_multiplier", c.width_multiplier},
          {"use_channel_attention", c.use_channel_attention},
          {"use_spatial_attention", c.use_spatial_attention},
          {"use_fpd_stream", c.use_fpd_stream},
          {"use_fnd_stream", c.use_fnd_stream},
          {"use_attentive_split", c.use_attentive_split},
          {"backbone_weights", c.backbone_weights}};
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"base_lr", c.base_lr},         {"momentum", c.momentum},
          {"weight_decay", c.weight_decay}, {"poly_power", c.poly_power},
          {"batch_size", c.batch_size},   {"epochs", c.epochs},
          {"max_steps", c.max_steps},     {"seed", c.seed},
          {"image_size", c.image_size},   {"augment", c.augment}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.backbone = parse_backbone(j.at("backbone").get<std::string>());
    c.reduced_channels = j.at("reduced_channels").get<std::array<int, 4>>();
    c.width_multiplier = j.at("width_multiplier").get<double>();
    c.use_channel_attention = j.at("use_channel_attention").get<bool>();
    c.use_spatial_attention = j.at("use_spatial_attention").get<bool>();
    c.use_fpd_stream = j.at("use_fpd_stream").get<bool>();
    c.use_fnd_stream = j.at("use_fnd_stream").get<bool>();
    c.use_attentive_split = j.at("use_attentive_split").get<bool>();
    c.backbone_weights = j.value("backbone_weights", std::string());
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  try {
    TrainConfig c;
    c.base_lr = j.at("base_lr").get<double>();
    c.momentum = j.at("momentum").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.poly_power = j.at("poly_power").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.max_steps = j.at("max_steps").get<long>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.image_size = j.at("image_size").get<int>();
    c.augment = j.at("augment").get<bool>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
}

}  // namespace pfnet
