#include "fpmoe/config.hpp"

#include <set>

#include "fpmoe/errors.hpp"

namespace fpmoe {

std::string to_string(FfnKind kind) { return kind == FfnKind::Moe ? "moe" : "dense"; }

FfnKind ffn_kind_from_string(const std::string& s) {
  if (s == "dense") return FfnKind::Dense;
  if (s == "moe") return FfnKind::Moe;
  throw ContractError("unknown ffn kind '" + s + "' (expected dense or moe)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ContractError("model config: " + msg); };
  if (n_layers == 0 || d_model == 0 || d_ff == 0 || vocab_size == 0 || context_length == 0) {
    fail("layer count, widths, vocabulary and context must be positive");
  }
  if (n_q_heads == 0 || n_kv_heads == 0) fail("head counts must be positive");
  if (n_q_heads % n_kv_heads != 0) fail("n_q_heads must be divisible by n_kv_heads");
  if (d_model % n_q_heads != 0) fail("d_model must be divisible by n_q_heads");
  if (!(norm_eps > 0.0)) fail("norm_eps must be positive");
  if (ffn_kind == FfnKind::Moe) {
    if (n_routed_experts == 0) fail("n_routed_experts must be positive");
    if (top_k < 1 || top_k > n_routed_experts) fail("top_k must lie in [1, n_routed_experts]");
    if (alpha < 0.0) fail("alpha must be non-negative");
  }
  if (languages.empty()) fail("at least one language is required");
  std::set<std::string> uniq(languages.begin(), languages.end());
  if (uniq.size() != languages.size()) fail("language tags must be unique");
}

ModelConfig ModelConfig::with_kind(FfnKind kind) const {
  ModelConfig c = *this;
  c.ffn_kind = kind;
  return c;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_layers", c.n_layers},
                     {"d_model", c.d_model},
                     {"n_q_heads", c.n_q_heads},
                     {"n_kv_heads", c.n_kv_heads},
                     {"d_ff", c.d_ff},
                     {"vocab_size", c.vocab_size},
                     {"context_length", c.context_length},
                     {"n_routed_experts", c.n_routed_experts},
                     {"top_k", c.top_k},
                     {"alpha", c.alpha},
                     {"has_shared_expert", c.has_shared_expert},
                     {"ffn_kind", to_string(c.ffn_kind)},
                     {"norm_eps", c.norm_eps},
                     {"languages", c.languages}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const std::set<std::string> known{"n_layers",   "d_model",        "n_q_heads",        "n_kv_heads",
                                           "d_ff",       "vocab_size",     "context_length",   "n_routed_experts",
                                           "top_k",      "alpha",          "has_shared_expert", "ffn_kind",
                                           "norm_eps",   "languages"};
  if (!j.is_object()) throw ContractError("model config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ContractError("unknown model config key '" + key + "'");
  }
  try {
    c.n_layers = j.value("n_layers", c.n_layers);
    c.d_model = j.value("d_model", c.d_model);
    c.n_q_heads = j.value("n_q_heads", c.n_q_heads);
    c.n_kv_heads = j.value("n_kv_heads", c.n_kv_heads);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.context_length = j.value("context_length", c.context_length);
    c.n_routed_experts = j.value("n_routed_experts", c.n_routed_experts);
    c.top_k = j.value("top_k", c.top_k);
    c.alpha = j.value("alpha", c.alpha);
    c.has_shared_expert = j.value("has_shared_expert", c.has_shared_expert);
    c.ffn_kind = ffn_kind_from_string(j.value("ffn_kind", to_string(c.ffn_kind)));
    c.norm_eps = j.value("norm_eps", c.norm_eps);
    c.languages = j.value("languages", c.languages);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("model config: ") + e.what());
  }
}

std::string dense_ffn_prefix(std::size_t layer) { return "layers." + std::to_string(layer) + ".ffn"; }

std::string expert_prefix(std::size_t layer, std::size_t expert) {
  return "layers." + std::to_string(layer) + ".moe.experts." + std::to_string(expert);
}

std::string shared_expert_prefix(std::size_t layer) { return "layers." + std::to_string(layer) + ".moe.shared"; }

std::vector<std::pair<std::string, Shape>> parameter_manifest(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model;
  std::vector<std::pair<std::string, Shape>> m;
  auto ffn = [&](const std::string& prefix) {
    m.emplace_back(prefix + ".gate_proj", Shape{d, c.d_ff});
    m.emplace_back(prefix + ".up_proj", Shape{d, c.d_ff});
    m.emplace_back(prefix + ".down_proj", Shape{c.d_ff, d});
  };
  m.emplace_back("tok_emb", Shape{c.vocab_size, d});
  m.emplace_back("pos_emb", Shape{c.context_length, d});
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l);
    m.emplace_back(p + ".attn_norm", Shape{d});
    m.emplace_back(p + ".attn.wq", Shape{d, d});
    m.emplace_back(p + ".attn.wk", Shape{d, c.kv_dim()});
    m.emplace_back(p + ".attn.wv", Shape{d, c.kv_dim()});
    m.emplace_back(p + ".attn.wo", Shape{d, d});
    m.emplace_back(p + ".ffn_norm", Shape{d});
    if (c.ffn_kind == FfnKind::Dense) {
      ffn(dense_ffn_prefix(l));
    } else {
      m.emplace_back(p + ".moe.router", Shape{d, c.n_routed_experts});
      for (std::size_t e = 0; e < c.n_routed_experts; ++e) ffn(expert_prefix(l, e));
      if (c.has_shared_expert) {
        ffn(shared_expert_prefix(l));
        m.emplace_back(p + ".moe.shared_gate.weight", Shape{d, 1});
        m.emplace_back(p + ".moe.shared_gate.bias", Shape{1});
      }
    }
  }
  m.emplace_back("final_norm", Shape{d});
  m.emplace_back("lm_head", Shape{d, c.vocab_size});
  return m;
}

std::size_t parameter_count(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model;
  const std::size_t ffn = 3 * d * c.d_ff;
  const std::size_t attn = 2 * d * d + 2 * d * c.kv_dim();
  std::size_t layer = 2 * d + attn;
  if (c.ffn_kind == FfnKind::Dense) {
    layer += ffn;
  } else {
    layer += d * c.n_routed_experts + c.n_routed_experts * ffn;
    if (c.has_shared_expert) layer += ffn + d + 1;
  }
  return c.vocab_size * d + c.context_length * d + c.n_layers * layer + d + d * c.vocab_size;
}

}  // namespace fpmoe
