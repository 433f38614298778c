#include <algorithm>
#include <cmath>

#include "fpmoe/errors.hpp"
#include "fpmoe/eval.hpp"
#include "fpmoe/transformer.hpp"

namespace fpmoe::eval {

using nlohmann::json;

namespace {

// Neumaier-compensated running sum; long documents add thousands of nearly
// equal terms and plain summation drifts in the last digits.
struct CompensatedSum {
  double sum = 0.0;
  double c = 0.0;
  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      c += (sum - t) + x;
    } else {
      c += (x - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + c; }
};

double row_nll(std::span<const double> logits, std::size_t target) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  return m + std::log(z) - logits[target];
}

}  // namespace

double EvalReport::average_perplexity() const {
  if (languages.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [_, score] : languages) s += score.perplexity;
  return s / static_cast<double>(languages.size());
}

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<corpus::Document>& docs, const EvalOptions& options) {
  ckpt.validate();
  const ModelConfig& cfg = ckpt.config;
  EvalReport report;
  report.kind = to_string(ckpt.kind());
  report.provenance = ckpt.provenance;
  report.label = options.label.empty() ? ckpt.provenance : options.label;
  report.seed = options.seed;
  report.corpus_hash = corpus::corpus_hash(docs);

  const bool want_routing = options.routing && ckpt.kind() == FfnKind::Moe;
  std::vector<moe::RoutingStats> layer_stats;
  if (want_routing) {
    layer_stats.assign(cfg.n_layers, moe::RoutingStats(cfg.n_routed_experts, cfg.top_k, cfg.languages));
  }
  std::vector<CompensatedSum> lambda_sums(cfg.n_layers);
  std::size_t lambda_tokens = 0;
  bool saw_shared = false;

  std::map<std::string, CompensatedSum> nll;
  std::map<std::string, std::size_t> counts;

  NoGradGuard no_grad;
  for (const auto& doc : docs) {
    if (want_routing && std::find(cfg.languages.begin(), cfg.languages.end(), doc.language) == cfg.languages.end()) {
      throw TagError("document '" + doc.doc_id + "' has language '" + doc.language +
                     "', which the checkpoint does not route");
    }
    const auto ids = corpus::tokenize(doc.text);
    nll[doc.language];
    counts[doc.language];
    if (ids.size() < 2) continue;
    for (std::size_t start = 0; start + 1 < ids.size(); start += cfg.context_length) {
      const std::size_t T = std::min(cfg.context_length, ids.size() - 1 - start);
      const std::span<const std::int32_t> input(ids.data() + start, T);
      const ForwardResult fwd = forward(ckpt, input, 1, T);
      const auto logits = fwd.logits.data();
      const std::size_t V = fwd.logits.cols();
      auto& acc = nll[doc.language];
      for (std::size_t t = 0; t < T; ++t) {
        acc.add(row_nll(logits.subspan(t * V, V), static_cast<std::size_t>(ids[start + t + 1])));
      }
      counts[doc.language] += T;

      if (!want_routing) continue;
      const std::vector<std::string> tags(T, doc.language);
      for (std::size_t l = 0; l < fwd.moe_layers.size(); ++l) {
        const auto& layer = fwd.moe_layers[l];
        layer_stats[l].merge(
            moe::compute_routing_stats(layer.routing.full_probs.data(), layer.routing, tags, cfg.languages));
        if (layer.lambda.defined()) {
          saw_shared = true;
          for (double v : layer.lambda.data()) lambda_sums[l].add(v);
        }
      }
      lambda_tokens += T;
    }
  }

  for (const auto& [lang, sum] : nll) {
    LanguageScore s;
    s.tokens = counts[lang];
    if (s.tokens > 0) {
      s.ce = sum.value() / static_cast<double>(s.tokens);
      s.perplexity = std::exp(s.ce);
    }
    report.languages[lang] = s;
  }

  if (want_routing) {
    RoutingReport rr;
    rr.layers = layer_stats;
    for (const auto& s : layer_stats) rr.aggregate.merge(s);
    rr.unconditional_entropy = rr.aggregate.unconditional_entropy();
    rr.conditional_entropy = rr.aggregate.conditional_entropy();
    for (const auto& lang : cfg.languages) {
      rr.language_entropy[lang] = rr.aggregate.language_entropy(lang);
      rr.majority_expert[lang] = rr.aggregate.majority_expert(lang);
    }
    if (saw_shared && lambda_tokens > 0) {
      std::vector<double> means;
      for (const auto& s : lambda_sums) means.push_back(s.value() / static_cast<double>(lambda_tokens));
      rr.mean_lambda = std::move(means);
    }
    report.routing = std::move(rr);
  }
  return report;
}

json routing_stats_to_json(const moe::RoutingStats& s) {
  json per_lang = json::object();
  for (const auto& [lang, counts] : s.per_language_counts()) per_lang[lang] = counts;
  return json{{"n_experts", s.n_experts()},     {"top_k", s.top_k()},         {"languages", s.languages()},
              {"tokens", s.tokens()},           {"topk_counts", s.topk_counts()}, {"prob_sums", s.prob_sums()},
              {"per_language_top1", per_lang}, {"f", s.f()},                 {"p", s.p()}};
}

moe::RoutingStats routing_stats_from_json(const json& j) {
  return moe::RoutingStats::from_counts(
      j.at("n_experts").get<std::size_t>(), j.at("top_k").get<std::size_t>(),
      j.at("languages").get<std::vector<std::string>>(), j.at("tokens").get<std::size_t>(),
      j.at("topk_counts").get<std::vector<std::size_t>>(), j.at("prob_sums").get<std::vector<double>>(),
      j.at("per_language_top1").get<std::map<std::string, std::vector<std::size_t>>>());
}

void to_json(json& j, const EvalReport& r) {
  json langs = json::object();
  for (const auto& [lang, s] : r.languages) {
    langs[lang] = {{"tokens", s.tokens}, {"ce", s.ce}, {"perplexity", s.perplexity}};
  }
  j = json{{"label", r.label},
           {"kind", r.kind},
           {"provenance", r.provenance},
           {"seed", r.seed},
           {"corpus_hash", r.corpus_hash},
           {"languages", langs},
           {"average_perplexity", r.average_perplexity()}};
  if (!r.routing) {
    j["routing"] = nullptr;
    return;
  }
  const auto& rr = *r.routing;
  json layers = json::array();
  for (const auto& s : rr.layers) layers.push_back(routing_stats_to_json(s));
  json majority = json::object();
  for (const auto& [lang, e] : rr.majority_expert) majority[lang] = e ? json(*e) : json(nullptr);
  json routing{{"aggregate", routing_stats_to_json(rr.aggregate)},
               {"layers", layers},
               {"unconditional_entropy", rr.unconditional_entropy},
               {"conditional_entropy", rr.conditional_entropy},
               {"language_entropy", rr.language_entropy},
               {"majority_expert", majority}};
  routing["shared_expert"] = rr.mean_lambda ? json{{"mean_lambda", *rr.mean_lambda}} : json(nullptr);
  j["routing"] = routing;
}

void from_json(const json& j, EvalReport& r) {
  try {
    r.label = j.at("label").get<std::string>();
    r.kind = j.at("kind").get<std::string>();
    r.provenance = j.at("provenance").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.corpus_hash = j.at("corpus_hash").get<std::string>();
    r.languages.clear();
    for (const auto& [lang, s] : j.at("languages").items()) {
      r.languages[lang] = {s.at("tokens").get<std::size_t>(), s.at("ce").get<double>(),
                           s.at("perplexity").get<double>()};
    }
    r.routing.reset();
    const auto& jr = j.at("routing");
    if (jr.is_null()) return;
    RoutingReport rr;
    rr.aggregate = routing_stats_from_json(jr.at("aggregate"));
    for (const auto& l : jr.at("layers")) rr.layers.push_back(routing_stats_from_json(l));
    rr.unconditional_entropy = jr.at("unconditional_entropy").get<double>();
    rr.conditional_entropy = jr.at("conditional_entropy").get<double>();
    rr.language_entropy = jr.at("language_entropy").get<std::map<std::string, double>>();
    for (const auto& [lang, e] : jr.at("majority_expert").items()) {
      rr.majority_expert[lang] = e.is_null() ? std::nullopt : std::optional(e.get<std::size_t>());
    }
    const auto& shared = jr.at("shared_expert");
    if (!shared.is_null()) rr.mean_lambda = shared.at("mean_lambda").get<std::vector<double>>();
    r.routing = std::move(rr);
  } catch (const json::exception& e) {
    throw ContractError(std::string("eval report: ") + e.what());
  }
}

}  // namespace fpmoe::eval
