#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "sia/rng.hpp"
#include "sia/store.hpp"

namespace sia {

using nlohmann::json;

namespace {

template <typename T>
T read_field(const json& value, const std::string& where) {
  try {
    if constexpr (std::is_same_v<T, int>) {
      if (!value.is_number_integer()) throw ConfigError(where + ": expected an integer");
      return value.get<int>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<std::int64_t>() >= 0)) {
        throw ConfigError(where + ": expected a non-negative integer");
      }
      return value.get<std::uint64_t>();
    } else {
      if (!value.is_number()) throw ConfigError(where + ": expected a number");
      return value.get<double>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

using Setter = std::function<void(const json&, const std::string&)>;

void apply_section(const json& section, const std::string& name, const std::map<std::string, Setter>& setters) {
  if (!section.is_object()) throw ConfigError("config section '" + name + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + name + "." + key + "'");
    it->second(value, name + "." + key);
  }
}

template <typename T>
Setter bind(T& field) {
  return [&field](const json& v, const std::string& where) { field = read_field<T>(v, where); };
}

}  // namespace

LoopConfig parse_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config document must be an object");

  LoopConfig cfg;
  AlgorithmConfig& a = cfg.algorithm;
  const std::map<std::string, Setter> loop{
      {"max_generations", bind(cfg.max_generations)},
      {"plateau_window", bind(cfg.plateau_window)},
      {"plateau_rel_threshold", bind(cfg.plateau_rel_threshold)},
      {"seed", bind(cfg.seed)},
      {"weight_steps_per_generation", bind(cfg.weight_steps_per_generation)},
      {"groups_per_step", bind(cfg.groups_per_step)},
      {"group_size", bind(cfg.group_size)},
      {"adapter_rank", bind(cfg.adapter_rank)},
      {"adapter_init_scale", bind(cfg.adapter_init_scale)},
      {"skew_threshold", bind(cfg.skew_threshold)},
      {"mean_floor", bind(cfg.mean_floor)},
      {"regression_fraction", bind(cfg.regression_fraction)},
      {"target_metric",
       [&cfg](const json& v, const std::string& where) {
         if (v.is_null()) {
           cfg.target_metric.reset();
         } else {
           cfg.target_metric = read_field<double>(v, where);
         }
       }},
  };
  const std::map<std::string, Setter> algorithm{
      {"gamma", bind(a.gamma)},
      {"lambda", bind(a.lambda)},
      {"clip_epsilon", bind(a.clip_epsilon)},
      {"beta_temperature", bind(a.beta_temperature)},
      {"kl_alpha", bind(a.kl_alpha)},
      {"ess_floor", bind(a.ess_floor)},
      {"top_k", bind(a.top_k)},
      {"learning_rate", bind(a.learning_rate)},
      {"value_coef", bind(a.value_coef)},
      {"max_grad_norm", bind(a.max_grad_norm)},
  };

  for (const auto& [key, value] : doc.items()) {
    if (key == "loop") {
      apply_section(value, key, loop);
    } else if (key == "algorithm") {
      apply_section(value, key, algorithm);
    } else {
      throw ConfigError("unknown config section '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

LoopConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

json config_to_json(const LoopConfig& c) {
  const AlgorithmConfig& a = c.algorithm;
  return json{
      {"loop",
       {{"max_generations", c.max_generations},
        {"plateau_window", c.plateau_window},
        {"plateau_rel_threshold", c.plateau_rel_threshold},
        {"seed", c.seed},
        {"weight_steps_per_generation", c.weight_steps_per_generation},
        {"groups_per_step", c.groups_per_step},
        {"group_size", c.group_size},
        {"adapter_rank", c.adapter_rank},
        {"adapter_init_scale", c.adapter_init_scale},
        {"skew_threshold", c.skew_threshold},
        {"mean_floor", c.mean_floor},
        {"regression_fraction", c.regression_fraction},
        {"target_metric", c.target_metric ? json(*c.target_metric) : json(nullptr)}}},
      {"algorithm",
       {{"gamma", a.gamma},
        {"lambda", a.lambda},
        {"clip_epsilon", a.clip_epsilon},
        {"beta_temperature", a.beta_temperature},
        {"kl_alpha", a.kl_alpha},
        {"ess_floor", a.ess_floor},
        {"top_k", a.top_k},
        {"learning_rate", a.learning_rate},
        {"value_coef", a.value_coef},
        {"max_grad_norm", a.max_grad_norm}}},
  };
}

std::uint64_t config_hash(const LoopConfig& config) { return Fnv1a{}.text(config_to_json(config).dump()).digest(); }

}  // namespace sia
