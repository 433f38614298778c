#include <algorithm>
#include <cstdio>
#include <sstream>

#include "fpmoe/corpus.hpp"
#include "fpmoe/errors.hpp"
#include "fpmoe/io.hpp"

namespace fpmoe::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

void to_json(json& j, const CorpusManifest& m) {
  json langs = json::object();
  for (const auto& [name, c] : m.languages) langs[name] = {{"files", c.files}, {"repos", c.repos}, {"tokens", c.tokens}};
  json stages = json::object();
  for (const auto& [name, s] : m.stages) stages[name] = {{"input", s.input}, {"kept", s.kept}, {"dropped", s.dropped}};
  json dropped = json::array();
  for (const auto& d : m.dropped_files) dropped.push_back({{"repo_id", d.repo_id}, {"path", d.path}, {"reason", d.reason}});
  json dedup = json::array();
  for (const auto& d : m.dedup_removed) {
    dedup.push_back({{"removed", d.removed}, {"survivor", d.survivor}, {"similarity", d.similarity}});
  }
  json decontam = json::array();
  for (const auto& d : m.decontam_removed) decontam.push_back({{"doc_id", d.doc_id}, {"ngram", d.ngram}});
  j = json{{"languages", langs},
           {"stages", stages},
           {"dropped_files", dropped},
           {"dedup_removed", dedup},
           {"decontam_removed", decontam}};
}

CorpusManifest describe(const std::vector<Document>& docs) {
  CorpusManifest m;
  for (const auto& d : docs) {
    auto& c = m.languages[d.language];
    ++c.repos;
    c.tokens += d.text.size();
  }
  return m;
}

CorpusManifest describe(const std::vector<Repository>& repos) {
  CorpusManifest m;
  for (const auto& r : repos) {
    auto& c = m.languages[r.language];
    ++c.repos;
    c.files += r.files.size();
    for (const auto& f : r.files) c.tokens += f.text.size();
  }
  return m;
}

std::string corpus_hash(const std::vector<Document>& docs) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view s) {
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    h ^= 0xFF;
    h *= 0x100000001b3ULL;
  };
  for (const auto& d : docs) {
    feed(d.doc_id);
    feed(d.language);
    feed(d.text);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string to_jsonl(const std::vector<Document>& docs) {
  std::string out;
  for (const auto& d : docs) {
    out += json{{"doc_id", d.doc_id}, {"language", d.language}, {"text", d.text}}.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<Document> from_jsonl(std::string_view text) {
  std::vector<Document> docs;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    ++line_no;
    pos = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = json::parse(line);
      docs.push_back({j.at("doc_id").get<std::string>(), j.at("language").get<std::string>(),
                      j.at("text").get<std::string>()});
    } catch (const json::exception& e) {
      throw ContractError("document record on line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return docs;
}

void write_documents(const fs::path& path, const std::vector<Document>& docs) {
  io::write_file_atomic(path, to_jsonl(docs));
}

std::vector<Document> read_documents(const fs::path& path) { return from_jsonl(io::read_file(path)); }

void write_repositories(const fs::path& root, const std::vector<Repository>& repos) {
  for (const auto& r : repos) {
    for (const auto& f : r.files) {
      const fs::path rel(f.path);
      if (rel.is_absolute() || rel.empty()) throw ContractError("file path '" + f.path + "' must be relative");
      for (const auto& part : rel) {
        if (part == "..") throw ContractError("file path '" + f.path + "' escapes its repository");
      }
      io::write_file_atomic(root / r.language / r.repo_id / rel, f.text);
    }
  }
}

std::vector<Repository> read_repositories(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("corpus root " + root.string() + " is not a directory");
  auto sorted_dirs = [](const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_directory()) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  std::vector<Repository> repos;
  for (const auto& lang_dir : sorted_dirs(root)) {
    const std::string language = lang_dir.filename().string();
    for (const auto& repo_dir : sorted_dirs(lang_dir)) {
      Repository repo{repo_dir.filename().string(), language, {}};
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(repo_dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        repo.files.push_back({repo.repo_id, fs::relative(f, repo_dir).generic_string(), io::read_file(f), language});
      }
      repos.push_back(std::move(repo));
    }
  }
  return repos;
}

}  // namespace fpmoe::corpus
