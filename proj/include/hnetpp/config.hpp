#ifndef HNETPP_CONFIG_HPP
#define HNETPP_CONFIG_HPP

// Run configuration as flat JSON with full-path keys, e.g.
//   {"model.levels": 2, "optim.lr": 0.003, "train.steps": 2000}
// Unknown keys and wrongly typed values are rejected.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "hnetpp/curriculum.hpp"
#include "hnetpp/model.hpp"
#include "hnetpp/objective.hpp"
#include "hnetpp/optim.hpp"
#include "hnetpp/router.hpp"

namespace hnetpp {

using json = nlohmann::json;

struct TrainSettings {
  std::size_t steps = 1000;
  std::size_t micro_batches = 4;
  std::size_t docs_per_micro = 1;
  std::uint64_t seed = 0;
  std::size_t log_every = 1;
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::string precision = "f32";     // f32 | f64
  std::string gate_mode = "hard";    // hard | soft
  std::size_t kl_warmup_steps = 10'000;
};

struct DataSettings {
  std::vector<double> split{0.9, 0.05, 0.05};
  std::uint64_t split_seed = 0;
};

struct RunConfig {
  ModelConfig model;
  LossWeights loss;
  AuxLossOptions aux;
  OptimizerConfig optim;
  CurriculumConfig curriculum;
  TemperatureSchedule gumbel;
  TrainSettings train;
  DataSettings data;

  void validate() const {
    model.validate();
    loss.validate();
    optim.validate();
    curriculum.validate();
    if (aux.target_rates.empty()) throw ConfigError("loss.target_rate needs at least one value");
    for (double r : aux.target_rates)
      if (!(r > 0 && r < 1)) throw ConfigError("loss.target_rate entries must lie in (0, 1)");
    if (!(aux.length_cap > 0)) throw ConfigError("loss.length_cap must be positive");
    if (!(gumbel.start > 0 && gumbel.floor > 0 && gumbel.decay > 0 && gumbel.decay <= 1)) {
      throw ConfigError("gumbel temperature settings must be positive with decay in (0, 1]");
    }
    if (train.micro_batches == 0 || train.docs_per_micro == 0) throw ConfigError("train batch sizes must be positive");
    if (train.log_every == 0) throw ConfigError("train.log_every must be positive");
    if (train.precision != "f32" && train.precision != "f64") throw ConfigError("train.precision must be f32 or f64");
    if (train.gate_mode != "hard" && train.gate_mode != "soft") throw ConfigError("train.gate_mode must be hard or soft");
    if (data.split.size() != 3) throw ConfigError("data.split must hold three fractions (train, validation, test)");
    double total = 0.0;
    for (double f : data.split) {
      if (!(f >= 0)) throw ConfigError("data.split fractions must be nonnegative");
      total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("data.split fractions must sum to 1");
  }
};

namespace detail {

template <typename V>
V read_value(const std::string& key, const json& j) {
  auto fail = [&](const char* want) -> V {
    throw ConfigError(key + ": expected " + want + ", got " + j.dump());
  };
  if constexpr (std::is_same_v<V, bool>) {
    if (!j.is_boolean()) return fail("a boolean");
    return j.get<bool>();
  } else if constexpr (std::is_integral_v<V>) {
    if (!j.is_number_unsigned()) return fail("a nonnegative integer");
    return j.get<V>();
  } else if constexpr (std::is_floating_point_v<V>) {
    if (!j.is_number()) return fail("a number");
    return j.get<V>();
  } else if constexpr (std::is_same_v<V, std::string>) {
    if (!j.is_string()) return fail("a string");
    return j.get<std::string>();
  } else {
    if (!j.is_array()) return fail("an array");
    V out;
    for (const auto& e : j) out.push_back(read_value<typename V::value_type>(key, e));
    return out;
  }
}

struct ConfigField {
  std::string key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename Ref>
ConfigField field(std::string key, Ref ref) {
  ConfigField f;
  f.key = key;
  f.get = [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); };
  f.set = [ref, key](RunConfig& c, const json& j) {
    using V = std::remove_reference_t<decltype(ref(c))>;
    ref(c) = read_value<V>(key, j);
  };
  return f;
}

#define HNETPP_FIELD(key, member) field(key, [](RunConfig& c) -> auto& { return c.member; })

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = {
      HNETPP_FIELD("model.levels", model.levels),
      HNETPP_FIELD("model.router.embed_dim", model.router_embed_dim),
      HNETPP_FIELD("model.router.hidden", model.router_hidden),
      HNETPP_FIELD("model.router.gru_layers", model.router_gru_layers),
      HNETPP_FIELD("model.router.mlp_dims", model.router_mlp_dims),
      HNETPP_FIELD("model.router.dropout", model.router_dropout),
      HNETPP_FIELD("model.mixer.heads", model.mixer_heads),
      HNETPP_FIELD("model.mixer.ffn_hidden", model.mixer_ffn_hidden),
      HNETPP_FIELD("model.mixer.causal", model.mixer_causal),
      HNETPP_FIELD("model.mixer.dropout", model.mixer_dropout),
      HNETPP_FIELD("model.latent.dim", model.latent_dim),
      HNETPP_FIELD("model.latent.hidden", model.latent_hidden),
      HNETPP_FIELD("model.decoder.value_dim", model.decoder_value_dim),
      HNETPP_FIELD("model.decoder.type_dim", model.decoder_type_dim),
      HNETPP_FIELD("model.decoder.position_dim", model.decoder_position_dim),
      HNETPP_FIELD("model.decoder.hidden", model.decoder_hidden),
      HNETPP_FIELD("model.decoder.layers", model.decoder_layers),
      HNETPP_FIELD("model.decoder.output_dims", model.decoder_output_dims),
      HNETPP_FIELD("model.decoder.dropout", model.decoder_dropout),
      HNETPP_FIELD("loss.kl_weight", loss.kl),
      HNETPP_FIELD("loss.morph_weight", loss.morph),
      HNETPP_FIELD("loss.aux_weight", loss.aux),
      HNETPP_FIELD("loss.label_smoothing", loss.label_smoothing),
      HNETPP_FIELD("loss.kl_warmup_steps", train.kl_warmup_steps),
      HNETPP_FIELD("loss.target_rate", aux.target_rates),
      HNETPP_FIELD("loss.length_cap", aux.length_cap),
      HNETPP_FIELD("optim.lr", optim.lr),
      HNETPP_FIELD("optim.beta1", optim.beta1),
      HNETPP_FIELD("optim.beta2", optim.beta2),
      HNETPP_FIELD("optim.eps", optim.eps),
      HNETPP_FIELD("optim.weight_decay", optim.weight_decay),
      HNETPP_FIELD("optim.warmup_steps", optim.warmup_steps),
      HNETPP_FIELD("optim.min_lr", optim.min_lr),
      HNETPP_FIELD("optim.clip_norm", optim.clip_norm),
      HNETPP_FIELD("optim.total_steps", optim.total_steps),
      HNETPP_FIELD("curriculum.scale", curriculum.scale),
      HNETPP_FIELD("curriculum.warmup_end", curriculum.warmup_end),
      HNETPP_FIELD("curriculum.growth_end", curriculum.growth_end),
      HNETPP_FIELD("curriculum.warmup_length", curriculum.warmup_length),
      HNETPP_FIELD("curriculum.growth_lengths", curriculum.growth_lengths),
      HNETPP_FIELD("curriculum.growth_probs", curriculum.growth_probs),
      HNETPP_FIELD("curriculum.max_length", curriculum.max_length),
      HNETPP_FIELD("gumbel.tau_start", gumbel.start),
      HNETPP_FIELD("gumbel.tau_decay", gumbel.decay),
      HNETPP_FIELD("gumbel.tau_floor", gumbel.floor),
      HNETPP_FIELD("train.steps", train.steps),
      HNETPP_FIELD("train.micro_batches", train.micro_batches),
      HNETPP_FIELD("train.docs_per_micro", train.docs_per_micro),
      HNETPP_FIELD("train.seed", train.seed),
      HNETPP_FIELD("train.log_every", train.log_every),
      HNETPP_FIELD("train.checkpoint_every", train.checkpoint_every),
      HNETPP_FIELD("train.precision", train.precision),
      HNETPP_FIELD("train.gate_mode", train.gate_mode),
      HNETPP_FIELD("data.split", data.split),
      HNETPP_FIELD("data.split_seed", data.split_seed),
  };
  return fields;
}

#undef HNETPP_FIELD

}  // namespace detail

/// Every key with its current value.
inline json config_to_json(const RunConfig& c) {
  json j = json::object();
  for (const auto& f : detail::config_fields()) j[f.key] = f.get(c);
  return j;
}

/// Applies the keys present in `j` on top of `base` and validates the result.
inline RunConfig config_from_json(const json& j, RunConfig base = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object with flat dotted keys");
  const auto& fields = detail::config_fields();
  for (const auto& [key, value] : j.items()) {
    auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.key == key; });
    if (it == fields.end()) throw ConfigError("unknown config key: " + key);
    it->set(base, value);
  }
  base.validate();
  return base;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace hnetpp

#endif  // HNETPP_CONFIG_HPP
