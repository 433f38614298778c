#pragma once
// Corpus curation: line-length filtering, repository-level deduplication,
// n-gram decontamination and repository-level sequence construction, plus a
// synthetic generator of three related formal languages and byte tokenization.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace fpmoe::corpus {

inline const std::vector<std::string>& default_languages() {
  static const std::vector<std::string> langs{"lang0", "lang1", "lang2"};
  return langs;
}

struct SourceFile {
  std::string repo_id;
  std::string path;
  std::string text;
  std::string language;
};

struct Repository {
  std::string repo_id;
  std::string language;
  std::vector<SourceFile> files;
};

struct Document {
  std::string doc_id;
  std::string language;
  std::string text;

  bool operator==(const Document&) const = default;
};

// ---- tokenization (byte level, vocabulary 256) ----

std::vector<std::int32_t> tokenize(std::string_view text);
std::string detokenize(const std::vector<std::int32_t>& ids);

// ---- filtering ----

struct FilterThresholds {
  double max_avg_line = 100.0;
  std::size_t max_line = 1000;
};

struct FilterDecision {
  bool keep = true;
  std::string reason;  // "avg_line", "max_line", "encoding", "empty"; empty when kept
  double avg_line = 0.0;
  std::size_t longest_line = 0;
};

bool is_valid_utf8(std::string_view text);

// Lines split on '\n' (a trailing newline does not open a new line, a '\r'
// before '\n' is not counted); length in Unicode scalar values. Drops when
// avg > max_avg_line or max > max_line, both strict.
FilterDecision filter_file(const SourceFile& file, const FilterThresholds& thresholds = {});

struct DropRecord {
  std::string repo_id;
  std::string path;
  std::string reason;
};

struct FilterResult {
  std::vector<Repository> kept;  // repos left with no files are omitted
  std::vector<DropRecord> dropped;
  std::size_t files_in = 0;
  std::size_t files_kept = 0;
};

FilterResult filter_repositories(const std::vector<Repository>& repos, const FilterThresholds& thresholds = {});

// ---- repository-level sequences ----

inline constexpr std::string_view kDefaultSeparator = "\n\n";

// Files ordered by path and joined with `separator`. All files must share a
// repo and language (ContractError otherwise).
Document concat_repository(const std::vector<SourceFile>& files, std::string_view separator = kDefaultSeparator);
std::vector<Document> concat_repositories(const std::vector<Repository>& repos,
                                          std::string_view separator = kDefaultSeparator);

// ---- deduplication ----

std::uint64_t content_hash(std::string_view text);
std::set<std::uint64_t> file_hash_set(const Repository& repo);
double jaccard(const std::set<std::uint64_t>& a, const std::set<std::uint64_t>& b);

struct DedupRemoval {
  std::string removed;
  std::string survivor;
  double similarity = 0.0;
};

struct DedupResult {
  std::vector<Repository> kept;  // sorted by repo_id
  std::vector<DedupRemoval> removed;
};

// Repos are visited in repo_id order; one is removed when its file-hash set has
// Jaccard >= threshold with an already kept repo (exact duplicates score 1).
DedupResult dedup_repositories(const std::vector<Repository>& repos, double threshold = 0.9);

// ---- decontamination ----

std::vector<std::string_view> whitespace_tokens(std::string_view text);

struct DecontamRemoval {
  std::string doc_id;
  std::string ngram;  // first shared n-gram, space-joined
};

struct DecontamResult {
  std::vector<Document> kept;
  std::vector<DecontamRemoval> removed;
};

// Removes documents sharing at least one whitespace-token n-gram with any test
// document. Tokens are compared raw. n must be >= 1.
DecontamResult decontaminate(const std::vector<Document>& corpus, const std::vector<Document>& test_docs,
                             std::size_t n = 10);

// ---- synthetic languages ----

// Keywords every synthetic language uses.
const std::vector<std::string>& shared_core_keywords();
// Keywords unique to one language.
const std::vector<std::string>& language_keywords(std::size_t language_index);

struct SyntheticOptions {
  std::size_t files_per_repo = 2;
};

// Repositories of `language` (one of default_languages()); each file grows by
// whole statements until it reaches doc_len / files_per_repo bytes.
std::vector<Repository> generate_synthetic_repositories(std::uint64_t seed, const std::string& language,
                                                        std::size_t n_repos, std::size_t doc_len,
                                                        const SyntheticOptions& options = {});
// Repository-level documents built from generate_synthetic_repositories.
std::vector<Document> generate_synthetic_corpus(std::uint64_t seed, const std::string& language, std::size_t n_docs,
                                                std::size_t doc_len, const SyntheticOptions& options = {});

// ---- manifest ----

struct StageCounts {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t dropped = 0;
  bool reconciles() const { return input == kept + dropped; }
};

struct LanguageCounts {
  std::size_t files = 0;
  std::size_t repos = 0;
  std::size_t tokens = 0;
};

struct CorpusManifest {
  std::map<std::string, LanguageCounts> languages;
  std::map<std::string, StageCounts> stages;
  std::vector<DropRecord> dropped_files;
  std::vector<DedupRemoval> dedup_removed;
  std::vector<DecontamRemoval> decontam_removed;
};

void to_json(nlohmann::json& j, const CorpusManifest& m);

// Per-language document/token counts of a processed corpus.
CorpusManifest describe(const std::vector<Document>& docs);
// Per-language file/repository/token counts of a raw repository set.
CorpusManifest describe(const std::vector<Repository>& repos);

// Stable content hash over (doc_id, language, text) of every document.
std::string corpus_hash(const std::vector<Document>& docs);

// ---- on-disk formats ----

// One JSON object per line: {"doc_id": ..., "language": ..., "text": ...}.
std::string to_jsonl(const std::vector<Document>& docs);
std::vector<Document> from_jsonl(std::string_view text);
void write_documents(const std::filesystem::path& path, const std::vector<Document>& docs);
std::vector<Document> read_documents(const std::filesystem::path& path);

// <root>/<language>/<repo_id>/<relative file path>
void write_repositories(const std::filesystem::path& root, const std::vector<Repository>& repos);
std::vector<Repository> read_repositories(const std::filesystem::path& root);

}  // namespace fpmoe::corpus
