#pragma once
// Sparse MoE feed-forward block: N routed SwiGLU experts selected per token
// by a linear Top-K router, plus an optional always-active shared expert whose
// output is scaled by a per-token sigmoid gate.
//
//   G(h)     = softmax(h W_g)
//   o_routed = sum_{i in TopK} g_i * E_i(h)      (g_i raw softmax values)
//   lambda   = sigmoid(h w_lambda + b_lambda)
//   h'       = o_routed + lambda * E_shared(h)

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fpmoe/tensor.hpp"

namespace fpmoe::moe {

// down_proj(silu(h gate_proj) * (h up_proj)); gate/up are [d_model, d_ff], down is [d_ff, d_model].
struct ExpertFFN {
  Tensor gate_proj;
  Tensor up_proj;
  Tensor down_proj;

  std::size_t d_model() const { return gate_proj.dim(0); }
  std::size_t d_ff() const { return gate_proj.dim(1); }
  Tensor forward(const Tensor& h) const;
};

// weight is stored [d_model, N] so logits = h weight.
struct Router {
  Tensor weight;
  std::size_t top_k = 2;

  std::size_t n_experts() const { return weight.dim(1); }
};

// lambda = sigmoid(h weight + bias); weight [d_model, 1], bias [1].
struct SharedGate {
  Tensor weight;
  Tensor bias;
};

struct MoEBlock {
  std::vector<ExpertFFN> experts;
  std::optional<ExpertFFN> shared;
  Router router;
  std::optional<SharedGate> shared_gate;

  std::size_t n_experts() const { return experts.size(); }
  bool has_shared() const { return shared.has_value(); }
  // Throws DimensionError/ContractError when shapes or K disagree.
  void validate() const;
};

struct RouteResult {
  std::size_t top_k = 0;
  std::size_t n_experts = 0;
  // Per token, top_k entries in descending probability order.
  std::vector<std::size_t> selected;
  std::vector<double> gates;
  Tensor full_probs;  // [tokens, N], differentiable

  std::size_t tokens() const { return top_k ? selected.size() / top_k : 0; }
  std::span<const std::size_t> selected_for(std::size_t token) const {
    return std::span<const std::size_t>(selected).subspan(token * top_k, top_k);
  }
};

// Softmax routing with Top-K selection; ties resolve to the lower expert index.
RouteResult route(const Tensor& h, const Router& router);

struct ForwardOptions {
  // Route every token to this expert alone with gate 1, bypassing the router.
  std::optional<std::size_t> force_expert;
  // Drop the shared expert's contribution (lambda and o_shared stay empty).
  bool exclude_shared = false;
};

struct MoEBlockOutput {
  Tensor h_prime;
  Tensor o_routed;
  Tensor o_shared;  // undefined when no shared expert contributes
  Tensor lambda;    // [tokens, 1]; undefined when no shared expert contributes
  RouteResult routing;
  // Token rows each routed expert evaluated in this call.
  std::vector<std::size_t> expert_evaluations;
  std::size_t shared_evaluations = 0;

  bool has_shared() const { return o_shared.defined(); }
};

MoEBlockOutput moe_ffn_forward(const Tensor& h, const MoEBlock& block, const ForwardOptions& options = {});

// alpha * N * sum_i f_i p_i over closed-form statistics.
double load_balance_loss(std::span<const double> f, std::span<const double> p, double alpha);

// Live, differentiable variant: f from Top-K membership counts normalised by
// tokens*K (constant), p the batch mean of full_probs (differentiable).
// Throws ContractError for an empty batch.
Tensor load_balance_loss(const RouteResult& routing, double alpha);

// Top-K membership fractions, sum to 1.
std::vector<double> dispatch_fractions(const RouteResult& routing);

// Routing statistics accumulated over one or more batches.
class RoutingStats {
 public:
  RoutingStats() = default;
  RoutingStats(std::size_t n_experts, std::size_t top_k, std::vector<std::string> languages);

  std::size_t n_experts() const { return n_experts_; }
  std::size_t top_k() const { return top_k_; }
  std::size_t tokens() const { return tokens_; }
  const std::vector<std::string>& languages() const { return languages_; }

  std::vector<double> f() const;
  std::vector<double> p() const;
  // Top-1 assignment counts per language.
  const std::map<std::string, std::vector<std::size_t>>& per_language_counts() const { return per_language_; }
  const std::vector<std::size_t>& topk_counts() const { return topk_counts_; }
  const std::vector<double>& prob_sums() const { return prob_sums_; }

  // Order-independent merge of another shard with the same layout.
  void merge(const RoutingStats& other);

  // Entropy (nats) of the Top-1 expert distribution, pooled over languages.
  double unconditional_entropy() const;
  // Token-weighted mean over languages of H(top-1 expert | language).
  double conditional_entropy() const;
  double language_entropy(const std::string& language) const;
  // Expert with the most Top-1 assignments for `language`; lowest index on ties.
  std::optional<std::size_t> majority_expert(const std::string& language) const;

  friend RoutingStats compute_routing_stats(std::span<const double> full_probs, const RouteResult& routing,
                                            std::span<const std::string> language_tags,
                                            std::span<const std::string> languages);

  // Restores raw accumulators (deserialization).
  static RoutingStats from_counts(std::size_t n_experts, std::size_t top_k, std::vector<std::string> languages,
                                  std::size_t tokens, std::vector<std::size_t> topk_counts,
                                  std::vector<double> prob_sums,
                                  std::map<std::string, std::vector<std::size_t>> per_language);

 private:
  std::size_t n_experts_ = 0;
  std::size_t top_k_ = 0;
  std::size_t tokens_ = 0;
  std::vector<std::string> languages_;
  std::vector<std::size_t> topk_counts_;
  std::vector<double> prob_sums_;
  std::map<std::string, std::vector<std::size_t>> per_language_;
};

// Stats from one routed batch. `full_probs` is the row-major [tokens, N]
// probability array (usually routing.full_probs.data()). Tags must align with
// tokens and belong to `languages`, otherwise TagError / ContractError.
RoutingStats compute_routing_stats(std::span<const double> full_probs, const RouteResult& routing,
                                   std::span<const std::string> language_tags, std::span<const std::string> languages);

// Entropy (nats) of a count histogram; 0 for an empty one.
double histogram_entropy(std::span<const std::size_t> counts);

}  // namespace fpmoe::moe
