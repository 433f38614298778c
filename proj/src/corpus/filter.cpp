#include <algorithm>

#include "fpmoe/corpus.hpp"

namespace fpmoe::corpus {

std::vector<std::int32_t> tokenize(std::string_view text) {
  std::vector<std::int32_t> ids(text.size());
  std::transform(text.begin(), text.end(), ids.begin(),
                 [](char c) { return static_cast<std::int32_t>(static_cast<unsigned char>(c)); });
  return ids;
}

std::string detokenize(const std::vector<std::int32_t>& ids) {
  std::string out(ids.size(), '\0');
  std::transform(ids.begin(), ids.end(), out.begin(), [](std::int32_t id) { return static_cast<char>(id & 0xFF); });
  return out;
}

bool is_valid_utf8(std::string_view text) {
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto byte = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
  while (i < n) {
    const unsigned char c = byte(i);
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((byte(i + k) & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (byte(i + k) & 0x3F);
    }
    // overlong forms, surrogates, out of range
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) return false;
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += len;
  }
  return true;
}

FilterDecision filter_file(const SourceFile& file, const FilterThresholds& thresholds) {
  FilterDecision d;
  const std::string_view text = file.text;
  if (text.empty()) {
    d.keep = false;
    d.reason = "empty";
    return d;
  }
  if (!is_valid_utf8(text)) {
    d.keep = false;
    d.reason = "encoding";
    return d;
  }
  std::size_t lines = 0, total = 0, current = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (!line.empty() && line.back() == '\r' && nl != std::string_view::npos) line.remove_suffix(1);
    current = 0;
    for (char c : line) {
      if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++current;  // count lead bytes only
    }
    ++lines;
    total += current;
    d.longest_line = std::max(d.longest_line, current);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  d.avg_line = static_cast<double>(total) / static_cast<double>(lines);
  if (d.longest_line > thresholds.max_line) {
    d.keep = false;
    d.reason = "max_line";
  } else if (d.avg_line > thresholds.max_avg_line) {
    d.keep = false;
    d.reason = "avg_line";
  }
  return d;
}

FilterResult filter_repositories(const std::vector<Repository>& repos, const FilterThresholds& thresholds) {
  FilterResult r;
  for (const auto& repo : repos) {
    Repository kept{repo.repo_id, repo.language, {}};
    for (const auto& f : repo.files) {
      ++r.files_in;
      const auto d = filter_file(f, thresholds);
      if (d.keep) {
        kept.files.push_back(f);
        ++r.files_kept;
      } else {
        r.dropped.push_back({f.repo_id, f.path, d.reason});
      }
    }
    if (!kept.files.empty()) r.kept.push_back(std::move(kept));
  }
  std::sort(r.dropped.begin(), r.dropped.end(), [](const DropRecord& a, const DropRecord& b) {
    return std::tie(a.repo_id, a.path) < std::tie(b.repo_id, b.path);
  });
  return r;
}

}  // namespace fpmoe::corpus
