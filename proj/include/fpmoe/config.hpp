#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "fpmoe/tensor.hpp"

namespace fpmoe {

enum class FfnKind { Dense, Moe };

std::string to_string(FfnKind kind);
FfnKind ffn_kind_from_string(const std::string& s);

// Architecture hyperparameters. Defaults are the desk-scale shipped config:
// 4 layers, width 64, 4 query / 2 key-value heads, 3 routed experts with
// Top-2 routing, one gated shared expert, byte vocabulary.
struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t d_model = 64;
  std::size_t n_q_heads = 4;
  std::size_t n_kv_heads = 2;
  std::size_t d_ff = 128;
  std::size_t vocab_size = 256;
  std::size_t context_length = 256;
  std::size_t n_routed_experts = 3;
  std::size_t top_k = 2;
  double alpha = 0.01;
  bool has_shared_expert = true;
  FfnKind ffn_kind = FfnKind::Dense;
  double norm_eps = 1e-5;
  // Routed expert i is aligned with languages[i].
  std::vector<std::string> languages{"lang0", "lang1", "lang2"};

  std::size_t head_dim() const { return d_model / n_q_heads; }
  std::size_t kv_dim() const { return n_kv_heads * head_dim(); }

  // Throws ContractError on violated invariants.
  void validate() const;

  // Same architecture with the FFN swapped to `kind`.
  ModelConfig with_kind(FfnKind kind) const;

  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Canonical parameter names and shapes, in checkpoint order.
std::vector<std::pair<std::string, Shape>> parameter_manifest(const ModelConfig& config);

// Closed-form count of scalar parameters.
std::size_t parameter_count(const ModelConfig& config);

// Names of one layer's FFN projections.
std::string dense_ffn_prefix(std::size_t layer);
std::string expert_prefix(std::size_t layer, std::size_t expert);
std::string shared_expert_prefix(std::size_t layer);

}  // namespace fpmoe
