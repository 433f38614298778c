#include <cmath>
#include <set>

#include "fpmoe/errors.hpp"
#include "fpmoe/pipeline.hpp"

namespace fpmoe::pipeline {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ContractError("train config: learning_rate must be finite and non-negative");
  }
  if (batch_size < 1) throw ContractError("train config: batch_size must be >= 1");
  if (seq_len < 1) throw ContractError("train config: seq_len must be >= 1");
  if (!(epochs > 0.0)) throw ContractError("train config: epochs must be positive");
  if (alpha && *alpha < 0.0) throw ContractError("train config: alpha must be non-negative");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ContractError("train config: betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ContractError("train config: adam_eps must be positive");
  if (weight_decay < 0.0) throw ContractError("train config: weight_decay must be non-negative");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"learning_rate", c.learning_rate},
           {"batch_size", c.batch_size},
           {"seq_len", c.seq_len},
           {"warmup_steps", c.warmup_steps},
           {"epochs", c.epochs},
           {"seed", c.seed},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"adam_eps", c.adam_eps},
           {"weight_decay", c.weight_decay}};
  j["steps"] = c.steps ? json(*c.steps) : json(nullptr);
  j["alpha"] = c.alpha ? json(*c.alpha) : json(nullptr);
}

void from_json(const json& j, TrainConfig& c) {
  static const std::set<std::string> known{"learning_rate", "batch_size", "seq_len", "steps",  "warmup_steps",
                                           "epochs",        "seed",       "alpha",   "beta1",  "beta2",
                                           "adam_eps",      "weight_decay"};
  if (!j.is_object()) throw ContractError("train config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ContractError("unknown train config key '" + key + "'");
  }
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seq_len = j.value("seq_len", c.seq_len);
    if (j.contains("steps")) c.steps = j["steps"].is_null() ? std::nullopt : std::optional(j["steps"].get<std::size_t>());
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    if (j.contains("alpha")) c.alpha = j["alpha"].is_null() ? std::nullopt : std::optional(j["alpha"].get<double>());
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
  } catch (const json::exception& e) {
    throw ContractError(std::string("train config: ") + e.what());
  }
}

void AdamW::step(Checkpoint& params, double learning_rate) {
  for (auto& [name, t] : params.params()) {
    if (params.is_frozen(name)) continue;
    if (!t.has_grad()) throw ContractError("optimizer: trainable parameter '" + name + "' has no gradient");
  }
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (auto& [name, t] : params.params()) {
    if (params.is_frozen(name)) continue;
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(t.numel(), 0.0);
      v.assign(t.numel(), 0.0);
    }
    const auto g = t.grad();
    auto w = t.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      double updated = w[i] - learning_rate * (mhat / (std::sqrt(vhat) + cfg_.adam_eps));
      if (cfg_.weight_decay != 0.0) updated -= learning_rate * cfg_.weight_decay * w[i];
      w[i] = round_to_storage(updated);
    }
  }
}

}  // namespace fpmoe::pipeline
