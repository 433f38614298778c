#include "fpmoe/transformer.hpp"

#include <string>

#include "fpmoe/errors.hpp"
#include "fpmoe/ops.hpp"

namespace fpmoe {

namespace {

moe::ExpertFFN expert_at(const Checkpoint& m, const std::string& prefix) {
  return {m.get(prefix + ".gate_proj"), m.get(prefix + ".up_proj"), m.get(prefix + ".down_proj")};
}

}  // namespace

moe::ExpertFFN dense_ffn(const Checkpoint& model, std::size_t layer) {
  if (model.kind() != FfnKind::Dense) throw ContractError("dense_ffn on a " + to_string(model.kind()) + " checkpoint");
  return expert_at(model, dense_ffn_prefix(layer));
}

moe::MoEBlock moe_block(const Checkpoint& model, std::size_t layer) {
  if (model.kind() != FfnKind::Moe) throw ContractError("moe_block on a " + to_string(model.kind()) + " checkpoint");
  const auto& c = model.config;
  const std::string p = "layers." + std::to_string(layer) + ".moe";
  moe::MoEBlock block;
  for (std::size_t e = 0; e < c.n_routed_experts; ++e) block.experts.push_back(expert_at(model, expert_prefix(layer, e)));
  block.router = {model.get(p + ".router"), c.top_k};
  if (c.has_shared_expert) {
    block.shared = expert_at(model, shared_expert_prefix(layer));
    block.shared_gate = moe::SharedGate{model.get(p + ".shared_gate.weight"), model.get(p + ".shared_gate.bias")};
  }
  return block;
}

ForwardResult forward(const Checkpoint& model, std::span<const std::int32_t> token_ids, std::size_t batch,
                      std::size_t seq, const moe::ForwardOptions& moe_options) {
  const auto& c = model.config;
  if (batch == 0 || seq == 0) throw ContractError("forward: empty batch");
  if (seq > c.context_length) {
    throw ContractError("forward: sequence length " + std::to_string(seq) + " exceeds context length " +
                        std::to_string(c.context_length));
  }
  if (token_ids.size() != batch * seq) {
    throw DimensionError("forward: " + std::to_string(token_ids.size()) + " token ids for batch " +
                         std::to_string(batch) + " x seq " + std::to_string(seq));
  }
  std::vector<std::int32_t> positions(batch * seq);
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<std::int32_t>(i % seq);

  ForwardResult result;
  Tensor x = add(embedding(model.get("tok_emb"), token_ids), embedding(model.get("pos_emb"), positions));
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l);
    const Tensor a = rms_norm(x, model.get(p + ".attn_norm"), c.norm_eps);
    const Tensor att = causal_attention(matmul(a, model.get(p + ".attn.wq")), matmul(a, model.get(p + ".attn.wk")),
                                        matmul(a, model.get(p + ".attn.wv")), batch, seq, c.n_q_heads, c.n_kv_heads);
    x = add(x, matmul(att, model.get(p + ".attn.wo")));
    const Tensor b = rms_norm(x, model.get(p + ".ffn_norm"), c.norm_eps);
    if (c.ffn_kind == FfnKind::Dense) {
      x = add(x, dense_ffn(model, l).forward(b));
    } else {
      auto out = moe::moe_ffn_forward(b, moe_block(model, l), moe_options);
      x = add(x, out.h_prime);
      result.moe_layers.push_back(std::move(out));
    }
  }
  result.logits = matmul(rms_norm(x, model.get("final_norm"), c.norm_eps), model.get("lm_head"));
  return result;
}

}  // namespace fpmoe
