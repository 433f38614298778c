#include <algorithm>
#include <string>

#include "fpmoe/corpus.hpp"
#include "fpmoe/errors.hpp"

namespace fpmoe::corpus {

Document concat_repository(const std::vector<SourceFile>& files, std::string_view separator) {
  if (files.empty()) throw ContractError("concat_repository: no files");
  const auto& first = files.front();
  std::vector<const SourceFile*> ordered;
  ordered.reserve(files.size());
  for (const auto& f : files) {
    if (f.repo_id != first.repo_id) {
      throw ContractError("concat_repository: files from repos '" + first.repo_id + "' and '" + f.repo_id + "'");
    }
    if (f.language != first.language) {
      throw ContractError("concat_repository: repo '" + f.repo_id + "' mixes languages '" + first.language +
                          "' and '" + f.language + "'");
    }
    ordered.push_back(&f);
  }
  std::sort(ordered.begin(), ordered.end(), [](const SourceFile* a, const SourceFile* b) { return a->path < b->path; });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i]->path == ordered[i - 1]->path) {
      throw ContractError("concat_repository: duplicate path '" + ordered[i]->path + "' in repo '" + first.repo_id + "'");
    }
  }
  Document doc{first.repo_id, first.language, {}};
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    if (i) doc.text.append(separator);
    doc.text.append(ordered[i]->text);
  }
  return doc;
}

std::vector<Document> concat_repositories(const std::vector<Repository>& repos, std::string_view separator) {
  std::vector<Document> docs;
  docs.reserve(repos.size());
  for (const auto& r : repos) {
    if (r.files.empty()) continue;
    docs.push_back(concat_repository(r.files, separator));
  }
  return docs;
}

std::uint64_t content_hash(std::string_view text) {
  // FNV-1a, 64-bit
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::set<std::uint64_t> file_hash_set(const Repository& repo) {
  std::set<std::uint64_t> s;
  for (const auto& f : repo.files) s.insert(content_hash(f.text));
  return s;
}

double jaccard(const std::set<std::uint64_t>& a, const std::set<std::uint64_t>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

DedupResult dedup_repositories(const std::vector<Repository>& repos, double threshold) {
  std::vector<const Repository*> order;
  order.reserve(repos.size());
  for (const auto& r : repos) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(),
                   [](const Repository* a, const Repository* b) { return a->repo_id < b->repo_id; });

  DedupResult result;
  std::vector<std::set<std::uint64_t>> kept_hashes;
  for (const auto* repo : order) {
    auto hashes = file_hash_set(*repo);
    std::optional<std::size_t> match;
    double best = 0.0;
    for (std::size_t k = 0; k < kept_hashes.size(); ++k) {
      const double s = jaccard(hashes, kept_hashes[k]);
      if (s >= threshold && (!match || s > best)) {
        match = k;
        best = s;
      }
    }
    if (match) {
      result.removed.push_back({repo->repo_id, result.kept[*match].repo_id, best});
    } else {
      result.kept.push_back(*repo);
      kept_hashes.push_back(std::move(hashes));
    }
  }
  return result;
}

}  // namespace fpmoe::corpus
