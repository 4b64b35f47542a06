#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsg/lsg.hpp"

namespace lsg::cli {

using nlohmann::json;

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config_error", msg) {}
};

/// Every tunable of the pipeline. Keys in a config file use the member names.
struct RunConfig {
  std::uint64_t seed = 7;

  // synthetic data
  std::size_t concepts = 20;
  std::size_t prompts = 20;
  std::size_t dim = 64;
  double separation = 5.0;
  double prompt_spread = 1.0;
  double embedding_noise = 0.1;
  std::size_t input_dim = 32;
  std::size_t train_samples = 2000;
  std::size_t test_samples = 1000;
  double labeled_fraction = 0.1;
  double signal = 0.8;
  double noise = 1.0;
  double label_noise = 0.0;

  // graph
  double rho = 0.003;
  std::vector<double> rho_list = {0.0, 0.001, 0.003, 0.01, 0.1};

  // stage 1
  std::size_t gcn_iterations = 5000;
  double gcn_lr = 1e-3;
  double gcn_momentum = 0.9;
  std::size_t gcn_hidden_dim = 0;
  std::size_t gcn_layers = 2;
  std::string gcn_classifier = "graph_conv";  // or "linear"
  std::string gcn_reduction = "mean";         // or "sum"

  // stage 2
  double lambda = 1.0;
  double mu = 8.0;
  std::size_t batch_size = 24;
  std::size_t epochs = 40;
  double lr = 1e-3;
  double head_lr_multiplier = 10.0;
  double momentum = 0.9;
  std::vector<std::size_t> encoder_dims = {64, 64};
  double reg_sign = 1.0;
  double prototype_weight = 0.0;
  std::size_t unlabeled_per_batch = 0;
  std::size_t warmup_epochs = 1;

  SynthTaskOptions synth_options() const {
    SynthTaskOptions o;
    o.embedding.concepts = concepts;
    o.embedding.prompts = prompts;
    o.embedding.dim = dim;
    o.embedding.separation = separation;
    o.embedding.prompt_spread = prompt_spread;
    o.embedding.noise = embedding_noise;
    o.embedding.seed = seed;
    o.input_dim = input_dim;
    o.train_samples = train_samples;
    o.test_samples = test_samples;
    o.labeled_fraction = labeled_fraction;
    o.signal = signal;
    o.noise = noise;
    o.label_noise = label_noise;
    return o;
  }

  GcnTrainConfig gcn_config() const {
    GcnTrainConfig c;
    c.iterations = gcn_iterations;
    c.learning_rate = gcn_lr;
    c.momentum = gcn_momentum;
    c.hidden_dim = gcn_hidden_dim;
    c.encoder_layers = gcn_layers;
    c.graph_conv_classifier = gcn_classifier == "graph_conv";
    c.reduction = gcn_reduction == "sum" ? Reduction::Sum : Reduction::Mean;
    c.seed = seed;
    return c;
  }

  GuidedTrainConfig train_config() const {
    GuidedTrainConfig c;
    c.lambda = lambda;
    c.mu = mu;
    c.batch_size = batch_size;
    c.epochs = epochs;
    c.learning_rate = lr;
    c.head_lr_multiplier = head_lr_multiplier;
    c.momentum = momentum;
    c.encoder_dims = encoder_dims;
    c.reg_sign = reg_sign;
    c.prototype_weight = prototype_weight;
    c.unlabeled_per_batch = unlabeled_per_batch;
    c.warmup_epochs = warmup_epochs;
    c.seed = seed;
    return c;
  }

  /// Sets one key from a JSON value. Throws ConfigError on unknown keys and
  /// type mismatches.
  void set(const std::string& key, const json& v);

  void apply(const json& obj) {
    if (!obj.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [k, v] : obj.items()) set(k, v);
  }

  void validate() const {
    if (gcn_classifier != "graph_conv" && gcn_classifier != "linear")
      throw ConfigError("gcn_classifier must be \"graph_conv\" or \"linear\"");
    if (gcn_reduction != "mean" && gcn_reduction != "sum")
      throw ConfigError("gcn_reduction must be \"mean\" or \"sum\"");
    if (encoder_dims.empty()) throw ConfigError("encoder_dims must not be empty");
    if (rho < 0.0 || rho > 1.0) throw ConfigError("rho must be in [0, 1]");
    for (double r : rho_list)
      if (r < 0.0 || r > 1.0) throw ConfigError("rho_list entries must be in [0, 1]");
  }

  json to_json() const;
};

namespace detail {

template <class T>
T read_value(const std::string& key, const json& v) {
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ConfigError(key + " must be a non-negative integer");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError(key + " must be a number");
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(key + " must be a string");
      return v.get<std::string>();
    } else {
      if (!v.is_array()) throw ConfigError(key + " must be an array");
      T out;
      for (const json& e : v) out.push_back(read_value<typename T::value_type>(key + "[]", e));
      return out;
    }
  } catch (const json::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

}  // namespace detail

#define LSG_CONFIG_FIELDS(X)                                                                  \
  X(seed) X(concepts) X(prompts) X(dim) X(separation) X(prompt_spread) X(embedding_noise)     \
  X(input_dim) X(train_samples) X(test_samples) X(labeled_fraction) X(signal) X(noise)        \
  X(label_noise) X(rho) X(rho_list) X(gcn_iterations) X(gcn_lr) X(gcn_momentum)               \
  X(gcn_hidden_dim) X(gcn_layers) X(gcn_classifier) X(gcn_reduction) X(lambda) X(mu)          \
  X(batch_size) X(epochs) X(lr) X(head_lr_multiplier) X(momentum) X(encoder_dims) X(reg_sign) \
  X(prototype_weight) X(unlabeled_per_batch) X(warmup_epochs)

inline void RunConfig::set(const std::string& key, const json& v) {
#define X(name)                                                        \
  if (key == #name) {                                                  \
    name = detail::read_value<decltype(name)>(key, v);                 \
    return;                                                            \
  }
  LSG_CONFIG_FIELDS(X)
#undef X
  throw ConfigError("unknown config key \"" + key + "\"");
}

inline json RunConfig::to_json() const {
  json j = json::object();
#define X(name) j[#name] = name;
  LSG_CONFIG_FIELDS(X)
#undef X
  return j;
}

/// `key=value`; the value is parsed as JSON, falling back to a bare string.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override \"" + assignment + "\" is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json v = json::parse(text, nullptr, false);
  if (v.is_discarded()) v = text;
  cfg.set(key, v);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  RunConfig cfg;
  cfg.apply(j);
  return cfg;
}

}  // namespace lsg::cli
