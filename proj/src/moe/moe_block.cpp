#include <algorithm>
#include <numeric>
#include <string>

#include "fpmoe/errors.hpp"
#include "fpmoe/moe.hpp"
#include "fpmoe/ops.hpp"

namespace fpmoe::moe {

Tensor ExpertFFN::forward(const Tensor& h) const {
  const Tensor gated = silu(matmul(h, gate_proj));
  const Tensor lifted = matmul(h, up_proj);
  return matmul(mul(gated, lifted), down_proj);
}

namespace {

void check_expert(const ExpertFFN& e, std::size_t d_model, const std::string& what) {
  if (e.gate_proj.ndim() != 2 || e.up_proj.shape() != e.gate_proj.shape() || e.gate_proj.dim(0) != d_model ||
      e.down_proj.ndim() != 2 || e.down_proj.dim(0) != e.gate_proj.dim(1) || e.down_proj.dim(1) != d_model) {
    throw DimensionError(what + ": inconsistent projections gate " + shape_str(e.gate_proj.shape()) + ", up " +
                         shape_str(e.up_proj.shape()) + ", down " + shape_str(e.down_proj.shape()) +
                         " for d_model " + std::to_string(d_model));
  }
}

}  // namespace

void MoEBlock::validate() const {
  if (experts.empty()) throw ContractError("MoE block has no routed experts");
  const std::size_t d = router.weight.dim(0);
  if (router.weight.ndim() != 2 || router.n_experts() != experts.size()) {
    throw DimensionError("router weight " + shape_str(router.weight.shape()) + " does not match " +
                         std::to_string(experts.size()) + " experts");
  }
  if (router.top_k < 1 || router.top_k > experts.size()) {
    throw ContractError("top_k " + std::to_string(router.top_k) + " outside [1, " + std::to_string(experts.size()) + "]");
  }
  for (std::size_t i = 0; i < experts.size(); ++i) check_expert(experts[i], d, "expert " + std::to_string(i));
  if (shared.has_value() != shared_gate.has_value()) {
    throw ContractError("shared expert and shared gate must be present together");
  }
  if (shared) {
    check_expert(*shared, d, "shared expert");
    if (shared_gate->weight.numel() != d || shared_gate->bias.numel() != 1) {
      throw DimensionError("shared gate weight " + shape_str(shared_gate->weight.shape()) + " / bias " +
                           shape_str(shared_gate->bias.shape()) + " do not match d_model " + std::to_string(d));
    }
  }
}

RouteResult route(const Tensor& h, const Router& router) {
  const std::size_t n = router.n_experts();
  if (router.top_k < 1 || router.top_k > n) {
    throw ContractError("top_k " + std::to_string(router.top_k) + " outside [1, " + std::to_string(n) + "]");
  }
  RouteResult r;
  r.top_k = router.top_k;
  r.n_experts = n;
  r.full_probs = softmax(matmul(h, router.weight), -1);
  const std::size_t tokens = r.full_probs.rows();
  const auto probs = r.full_probs.data();
  r.selected.reserve(tokens * r.top_k);
  r.gates.reserve(tokens * r.top_k);
  std::vector<std::size_t> order(n);
  for (std::size_t t = 0; t < tokens; ++t) {
    const double* row = probs.data() + t * n;
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [row](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    for (std::size_t j = 0; j < r.top_k; ++j) {
      r.selected.push_back(order[j]);
      r.gates.push_back(row[order[j]]);
    }
  }
  return r;
}

MoEBlockOutput moe_ffn_forward(const Tensor& h, const MoEBlock& block, const ForwardOptions& options) {
  block.validate();
  MoEBlockOutput out;
  out.routing = route(h, block.router);
  const std::size_t n = block.n_experts();
  const std::size_t tokens = h.rows();

  bool forced = false;
  if (options.force_expert) {
    if (*options.force_expert >= n) {
      throw IndexError("forced expert " + std::to_string(*options.force_expert) + " out of " + std::to_string(n));
    }
    forced = true;
    out.routing.top_k = 1;
    out.routing.selected.assign(tokens, *options.force_expert);
    out.routing.gates.assign(tokens, 1.0);
  }

  // Token rows per expert, in token order.
  std::vector<std::vector<std::size_t>> rows(n);
  for (std::size_t t = 0; t < tokens; ++t) {
    for (auto e : out.routing.selected_for(t)) rows[e].push_back(t);
  }

  out.expert_evaluations.assign(n, 0);
  Tensor routed = Tensor::zeros(h.shape());
  for (std::size_t e = 0; e < n; ++e) {
    if (rows[e].empty()) continue;
    out.expert_evaluations[e] = rows[e].size();
    Tensor y = block.experts[e].forward(gather_rows(h, rows[e]));
    if (!forced) y = mul_col(y, gather_column(out.routing.full_probs, rows[e], e));
    routed = index_add_rows(routed, rows[e], y);
  }
  out.o_routed = routed;

  if (block.has_shared() && !options.exclude_shared) {
    out.o_shared = block.shared->forward(h);
    out.shared_evaluations = tokens;
    out.lambda = sigmoid(add_row(matmul(h, block.shared_gate->weight), block.shared_gate->bias));
    out.h_prime = add(out.o_routed, mul_col(out.o_shared, out.lambda));
  } else {
    out.h_prime = out.o_routed;
  }
  return out;
}

double load_balance_loss(std::span<const double> f, std::span<const double> p, double alpha) {
  if (f.size() != p.size() || f.empty()) {
    throw DimensionError("load_balance_loss: f has " + std::to_string(f.size()) + " entries, p has " +
                         std::to_string(p.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) acc += f[i] * p[i];
  return alpha * static_cast<double>(f.size()) * acc;
}

std::vector<double> dispatch_fractions(const RouteResult& routing) {
  if (routing.tokens() == 0) throw ContractError("routing statistics over an empty batch");
  std::vector<double> f(routing.n_experts, 0.0);
  for (auto e : routing.selected) f[e] += 1.0;
  const double denom = static_cast<double>(routing.selected.size());
  for (auto& v : f) v /= denom;
  return f;
}

Tensor load_balance_loss(const RouteResult& routing, double alpha) {
  const auto f = dispatch_fractions(routing);
  const Tensor p = column_mean(routing.full_probs);
  const Tensor fc = Tensor::from({1, f.size()}, f);
  return scale(sum(mul(p, fc)), alpha * static_cast<double>(f.size()));
}

}  // namespace fpmoe::moe
