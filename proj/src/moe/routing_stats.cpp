#include <algorithm>
#include <cmath>
#include <string>

#include "fpmoe/errors.hpp"
#include "fpmoe/moe.hpp"

namespace fpmoe::moe {

double histogram_entropy(std::span<const std::size_t> counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) return 0.0;
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h;
}

RoutingStats::RoutingStats(std::size_t n_experts, std::size_t top_k, std::vector<std::string> languages)
    : n_experts_(n_experts),
      top_k_(top_k),
      languages_(std::move(languages)),
      topk_counts_(n_experts, 0),
      prob_sums_(n_experts, 0.0) {
  for (const auto& l : languages_) per_language_[l].assign(n_experts, 0);
}

RoutingStats RoutingStats::from_counts(std::size_t n_experts, std::size_t top_k, std::vector<std::string> languages,
                                       std::size_t tokens, std::vector<std::size_t> topk_counts,
                                       std::vector<double> prob_sums,
                                       std::map<std::string, std::vector<std::size_t>> per_language) {
  RoutingStats s(n_experts, top_k, std::move(languages));
  if (topk_counts.size() != n_experts || prob_sums.size() != n_experts) {
    throw DimensionError("routing stats accumulators do not match " + std::to_string(n_experts) + " experts");
  }
  for (const auto& [lang, counts] : per_language) {
    if (!s.per_language_.count(lang)) throw TagError("unknown language tag '" + lang + "'");
    if (counts.size() != n_experts) throw DimensionError("per-language histogram for '" + lang + "' has wrong size");
    s.per_language_[lang] = counts;
  }
  s.tokens_ = tokens;
  s.topk_counts_ = std::move(topk_counts);
  s.prob_sums_ = std::move(prob_sums);
  return s;
}

std::vector<double> RoutingStats::f() const {
  std::vector<double> out(n_experts_, 0.0);
  if (tokens_ == 0) return out;
  const double denom = static_cast<double>(tokens_ * top_k_);
  for (std::size_t i = 0; i < n_experts_; ++i) out[i] = static_cast<double>(topk_counts_[i]) / denom;
  return out;
}

std::vector<double> RoutingStats::p() const {
  std::vector<double> out(n_experts_, 0.0);
  if (tokens_ == 0) return out;
  for (std::size_t i = 0; i < n_experts_; ++i) out[i] = prob_sums_[i] / static_cast<double>(tokens_);
  return out;
}

void RoutingStats::merge(const RoutingStats& other) {
  if (n_experts_ == 0 && tokens_ == 0 && languages_.empty()) {
    *this = other;
    return;
  }
  if (other.n_experts_ != n_experts_ || other.top_k_ != top_k_ || other.languages_ != languages_) {
    throw ContractError("cannot merge routing stats with different layouts");
  }
  tokens_ += other.tokens_;
  for (std::size_t i = 0; i < n_experts_; ++i) {
    topk_counts_[i] += other.topk_counts_[i];
    prob_sums_[i] += other.prob_sums_[i];
  }
  for (const auto& [lang, counts] : other.per_language_) {
    auto& mine = per_language_[lang];
    for (std::size_t i = 0; i < n_experts_; ++i) mine[i] += counts[i];
  }
}

double RoutingStats::unconditional_entropy() const {
  std::vector<std::size_t> pooled(n_experts_, 0);
  for (const auto& [lang, counts] : per_language_) {
    for (std::size_t i = 0; i < n_experts_; ++i) pooled[i] += counts[i];
  }
  return histogram_entropy(pooled);
}

double RoutingStats::conditional_entropy() const {
  std::size_t total = 0;
  for (const auto& [lang, counts] : per_language_) {
    for (auto c : counts) total += c;
  }
  if (total == 0) return 0.0;
  double h = 0.0;
  for (const auto& [lang, counts] : per_language_) {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    h += static_cast<double>(n) / static_cast<double>(total) * histogram_entropy(counts);
  }
  return h;
}

double RoutingStats::language_entropy(const std::string& language) const {
  const auto it = per_language_.find(language);
  if (it == per_language_.end()) throw TagError("unknown language tag '" + language + "'");
  return histogram_entropy(it->second);
}

std::optional<std::size_t> RoutingStats::majority_expert(const std::string& language) const {
  const auto it = per_language_.find(language);
  if (it == per_language_.end()) throw TagError("unknown language tag '" + language + "'");
  const auto& c = it->second;
  if (std::all_of(c.begin(), c.end(), [](std::size_t v) { return v == 0; })) return std::nullopt;
  return static_cast<std::size_t>(std::max_element(c.begin(), c.end()) - c.begin());
}

RoutingStats compute_routing_stats(std::span<const double> full_probs, const RouteResult& routing,
                                   std::span<const std::string> language_tags, std::span<const std::string> languages) {
  const std::size_t tokens = routing.tokens();
  const std::size_t n = routing.n_experts;
  if (full_probs.size() != tokens * n) {
    throw DimensionError("routing stats: " + std::to_string(full_probs.size()) + " probabilities for " +
                         std::to_string(tokens) + " tokens x " + std::to_string(n) + " experts");
  }
  if (language_tags.size() != tokens) {
    throw ContractError("routing stats: " + std::to_string(language_tags.size()) + " language tags for " +
                        std::to_string(tokens) + " tokens");
  }
  RoutingStats s(n, routing.top_k, std::vector<std::string>(languages.begin(), languages.end()));
  s.tokens_ = tokens;
  for (std::size_t t = 0; t < tokens; ++t) {
    auto it = s.per_language_.find(language_tags[t]);
    if (it == s.per_language_.end()) throw TagError("unknown language tag '" + language_tags[t] + "'");
    const auto sel = routing.selected_for(t);
    for (auto e : sel) ++s.topk_counts_[e];
    ++it->second[sel[0]];
    for (std::size_t i = 0; i < n; ++i) s.prob_sums_[i] += full_probs[t * n + i];
  }
  return s;
}

}  // namespace fpmoe::moe
