#include <algorithm>
#include <cstdio>

#include "fpmoe/errors.hpp"
#include "fpmoe/eval.hpp"

namespace fpmoe::eval {

using nlohmann::json;

ComparisonTable compare(const std::vector<EvalReport>& reports, const std::string& baseline) {
  if (reports.empty()) throw ContractError("compare needs at least one report");
  ComparisonTable table;
  table.corpus_hash = reports.front().corpus_hash;
  for (const auto& [lang, _] : reports.front().languages) table.languages.push_back(lang);

  for (const auto& r : reports) {
    if (r.corpus_hash != table.corpus_hash) {
      throw ContractError("report '" + r.label + "' was scored on corpus " + r.corpus_hash + ", expected " +
                          table.corpus_hash);
    }
    std::vector<std::string> langs;
    for (const auto& [lang, _] : r.languages) langs.push_back(lang);
    if (langs != table.languages) throw ContractError("report '" + r.label + "' covers a different language set");
    ComparisonRow row;
    row.label = r.label;
    for (const auto& [lang, s] : r.languages) row.perplexity[lang] = s.perplexity;
    row.average = r.average_perplexity();
    table.rows.push_back(std::move(row));
  }

  table.baseline = baseline.empty() ? table.rows.front().label : baseline;
  const auto base = std::find_if(table.rows.begin(), table.rows.end(),
                                 [&](const ComparisonRow& r) { return r.label == table.baseline; });
  if (base == table.rows.end()) throw ContractError("baseline '" + table.baseline + "' is not a row label");
  const ComparisonRow ref = *base;
  for (auto& row : table.rows) {
    for (const auto& lang : table.languages) row.delta[lang] = row.perplexity[lang] - ref.perplexity.at(lang);
    row.average_delta = row.average - ref.average;
  }
  return table;
}

void to_json(json& j, const ComparisonTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"label", r.label},
                    {"perplexity", r.perplexity},
                    {"average", r.average},
                    {"delta", r.delta},
                    {"average_delta", r.average_delta}});
  }
  j = json{{"baseline", t.baseline}, {"corpus_hash", t.corpus_hash}, {"languages", t.languages}, {"rows", rows}};
}

std::string format_table(const ComparisonTable& t) {
  std::size_t width = 8;
  for (const auto& r : t.rows) width = std::max(width, r.label.size());
  std::string out;
  char buf[64];
  auto cell = [&](const std::string& s) {
    std::snprintf(buf, sizeof buf, " %12s", s.c_str());
    out += buf;
  };
  out += std::string("row") + std::string(width - 3, ' ');
  for (const auto& l : t.languages) cell(l);
  cell("average");
  cell("avg delta");
  out += "\n";
  for (const auto& r : t.rows) {
    out += r.label + std::string(width - r.label.size(), ' ');
    for (const auto& l : t.languages) {
      std::snprintf(buf, sizeof buf, "%.4f", r.perplexity.at(l));
      cell(buf);
    }
    std::snprintf(buf, sizeof buf, "%.4f", r.average);
    cell(buf);
    std::snprintf(buf, sizeof buf, "%+.4f", r.average_delta);
    cell(buf);
    out += r.label == t.baseline ? "  (baseline)\n" : "\n";
  }
  return out;
}

}  // namespace fpmoe::eval
