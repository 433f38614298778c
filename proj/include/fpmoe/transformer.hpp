#pragma once
// Decoder-only causal transformer over a Checkpoint's parameters: learned
// absolute positions, pre-norm residual blocks with RMS normalization,
// grouped-query causal attention, and either a dense SwiGLU FFN or the MoE
// block as the feed-forward sublayer.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fpmoe/checkpoint.hpp"
#include "fpmoe/moe.hpp"

namespace fpmoe {

struct ForwardResult {
  Tensor logits;  // [batch*seq, vocab]
  // One entry per layer for MoE checkpoints, empty for dense ones.
  std::vector<moe::MoEBlockOutput> moe_layers;
};

// token_ids is batch x seq, row-major. seq must not exceed the context length.
ForwardResult forward(const Checkpoint& model, std::span<const std::int32_t> token_ids, std::size_t batch,
                      std::size_t seq, const moe::ForwardOptions& moe_options = {});

// Views over one layer's FFN parameters (tensors alias the checkpoint).
moe::ExpertFFN dense_ffn(const Checkpoint& model, std::size_t layer);
moe::MoEBlock moe_block(const Checkpoint& model, std::size_t layer);

}  // namespace fpmoe
