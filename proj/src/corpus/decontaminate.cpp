#include <cctype>
#include <string>
#include <unordered_set>

#include "fpmoe/corpus.hpp"
#include "fpmoe/errors.hpp"

namespace fpmoe::corpus {

namespace {

bool is_ws(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string join_window(const std::vector<std::string_view>& toks, std::size_t start, std::size_t n) {
  std::string key;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) key.push_back(' ');
    key.append(toks[start + i]);
  }
  return key;
}

}  // namespace

std::vector<std::string_view> whitespace_tokens(std::string_view text) {
  std::vector<std::string_view> toks;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ws(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_ws(text[i])) ++i;
    if (i > start) toks.push_back(text.substr(start, i - start));
  }
  return toks;
}

DecontamResult decontaminate(const std::vector<Document>& corpus, const std::vector<Document>& test_docs,
                             std::size_t n) {
  if (n == 0) throw ContractError("decontaminate: n-gram length must be >= 1");
  // Tokens never contain whitespace, so a single space is an unambiguous joiner.
  std::unordered_set<std::string> test_ngrams;
  for (const auto& t : test_docs) {
    const auto toks = whitespace_tokens(t.text);
    for (std::size_t i = 0; i + n <= toks.size(); ++i) test_ngrams.insert(join_window(toks, i, n));
  }

  DecontamResult r;
  for (const auto& doc : corpus) {
    std::optional<std::string> hit;
    if (!test_ngrams.empty()) {
      const auto toks = whitespace_tokens(doc.text);
      for (std::size_t i = 0; i + n <= toks.size() && !hit; ++i) {
        auto key = join_window(toks, i, n);
        if (test_ngrams.count(key)) hit = std::move(key);
      }
    }
    if (hit) {
      r.removed.push_back({doc.doc_id, std::move(*hit)});
    } else {
      r.kept.push_back(doc);
    }
  }
  return r;
}

}  // namespace fpmoe::corpus
