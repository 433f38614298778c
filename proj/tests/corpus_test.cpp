#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <unistd.h>

#include "fpmoe/corpus.hpp"
#include "fpmoe/errors.hpp"

namespace fpmoe::corpus {
namespace {

namespace fs = std::filesystem;

SourceFile file_with(std::string text, std::string path = "a.hs") {
  return {"r", std::move(path), std::move(text), "lang0"};
}

std::string lines(std::size_t count, std::size_t width) {
  std::string s;
  for (std::size_t i = 0; i < count; ++i) s += std::string(width, 'a') + "\n";
  return s;
}

TEST(Filter, MaxLineBoundaryIsStrict) {
  // One long line among short ones keeps the average under 100.
  const std::string keep = std::string(1000, 'x') + "\n" + lines(20, 1);
  const std::string drop = std::string(1001, 'x') + "\n" + lines(20, 1);
  const auto k = filter_file(file_with(keep));
  EXPECT_TRUE(k.keep);
  EXPECT_EQ(k.longest_line, 1000u);
  const auto d = filter_file(file_with(drop));
  EXPECT_FALSE(d.keep);
  EXPECT_EQ(d.reason, "max_line");
}

TEST(Filter, AverageBoundaryIsStrict) {
  // Lines of 99 and 101: average exactly 100.
  const auto exact = filter_file(file_with(std::string(99, 'a') + "\n" + std::string(101, 'b') + "\n"));
  EXPECT_TRUE(exact.keep);
  EXPECT_DOUBLE_EQ(exact.avg_line, 100.0);
  const auto over = filter_file(file_with(std::string(100, 'a') + "\n" + std::string(101, 'b')));
  EXPECT_FALSE(over.keep);
  EXPECT_EQ(over.reason, "avg_line");
  EXPECT_DOUBLE_EQ(over.avg_line, 100.5);
}

TEST(Filter, LengthsCountCodePointsNotBytes) {
  // 100 copies of a two-byte character: 200 bytes but 100 characters.
  std::string wide;
  for (int i = 0; i < 100; ++i) wide += "\xce\xbb";
  const auto d = filter_file(file_with(wide));
  EXPECT_TRUE(d.keep);
  EXPECT_DOUBLE_EQ(d.avg_line, 100.0);
  EXPECT_FALSE(filter_file(file_with(wide + "\xce\xbb")).keep);
}

TEST(Filter, CarriageReturnsAndTrailingNewline) {
  const auto crlf = filter_file(file_with(std::string(100, 'a') + "\r\n" + std::string(100, 'b') + "\r\n"));
  EXPECT_TRUE(crlf.keep);
  EXPECT_DOUBLE_EQ(crlf.avg_line, 100.0);
  // The trailing newline opens no extra empty line that would lower the average.
  const auto trailing = filter_file(file_with(std::string(101, 'a') + "\n"));
  EXPECT_FALSE(trailing.keep);
}

TEST(Filter, EmptyAndInvalidEncoding) {
  EXPECT_EQ(filter_file(file_with("")).reason, "empty");
  EXPECT_EQ(filter_file(file_with("ok\n\xff\xfe")).reason, "encoding");
  EXPECT_FALSE(is_valid_utf8("\xc0\xaf"));  // overlong
  EXPECT_FALSE(is_valid_utf8("\xed\xa0\x80"));  // surrogate
  EXPECT_TRUE(is_valid_utf8("\xf0\x9f\x98\x80"));
}

TEST(Filter, RepositoryLedgerReconciles) {
  Repository a{"a", "lang0", {file_with("short\n", "x"), file_with(std::string(1001, 'z'), "y")}};
  Repository b{"b", "lang0", {file_with(std::string(2000, 'z'), "x")}};
  for (auto& f : a.files) f.repo_id = "a";
  b.files[0].repo_id = "b";
  const auto r = filter_repositories({a, b});
  EXPECT_EQ(r.files_in, 3u);
  EXPECT_EQ(r.files_kept, 1u);
  EXPECT_EQ(r.files_in, r.files_kept + r.dropped.size());
  ASSERT_EQ(r.kept.size(), 1u);
  EXPECT_EQ(r.kept[0].repo_id, "a");
  EXPECT_EQ(r.dropped[0].path, "y");
  EXPECT_EQ(r.dropped[0].reason, "max_line");
}

TEST(Concat, OrdersByPathAndJoins) {
  const std::vector<SourceFile> files{{"r", "src/b.ml", "B", "lang1"}, {"r", "src/a.ml", "A", "lang1"},
                                      {"r", "lib/z.ml", "Z", "lang1"}};
  const Document d = concat_repository(files);
  EXPECT_EQ(d.text, "Z\n\nA\n\nB");
  EXPECT_EQ(d.doc_id, "r");
  EXPECT_EQ(d.language, "lang1");
  EXPECT_EQ(concat_repository(files, "|").text, "Z|A|B");
}

TEST(Concat, RejectsMixedInputs) {
  EXPECT_THROW(concat_repository({{"r", "a", "A", "lang0"}, {"r", "b", "B", "lang1"}}), ContractError);
  EXPECT_THROW(concat_repository({{"r", "a", "A", "lang0"}, {"s", "b", "B", "lang0"}}), ContractError);
  EXPECT_THROW(concat_repository({{"r", "a", "A", "lang0"}, {"r", "a", "B", "lang0"}}), ContractError);
  EXPECT_THROW(concat_repository({}), ContractError);
}

Repository repo_of(const std::string& id, const std::vector<std::string>& texts) {
  Repository r{id, "lang0", {}};
  for (std::size_t i = 0; i < texts.size(); ++i) r.files.push_back({id, "f" + std::to_string(i), texts[i], "lang0"});
  return r;
}

std::vector<std::string> numbered(int from, int to) {
  std::vector<std::string> v;
  for (int i = from; i < to; ++i) v.push_back("file body " + std::to_string(i));
  return v;
}

TEST(Dedup, IdenticalRepositoriesCollapseToOne) {
  const auto r = dedup_repositories({repo_of("b", numbered(0, 4)), repo_of("a", numbered(0, 4))});
  ASSERT_EQ(r.kept.size(), 1u);
  EXPECT_EQ(r.kept[0].repo_id, "a");
  ASSERT_EQ(r.removed.size(), 1u);
  EXPECT_EQ(r.removed[0].removed, "b");
  EXPECT_EQ(r.removed[0].survivor, "a");
  EXPECT_EQ(r.removed[0].similarity, 1.0);
}

TEST(Dedup, ThresholdBoundary) {
  // 9 shared of 11 distinct: 0.818, kept.
  auto nine = numbered(0, 9);
  nine.push_back("other");
  const auto below = dedup_repositories({repo_of("a", numbered(0, 10)), repo_of("b", nine)});
  EXPECT_EQ(below.kept.size(), 2u);
  // 10 shared of 11 distinct: 0.909, removed.
  auto eleven = numbered(0, 11);
  const auto above = dedup_repositories({repo_of("a", numbered(0, 10)), repo_of("b", eleven)});
  ASSERT_EQ(above.kept.size(), 1u);
  EXPECT_NEAR(above.removed[0].similarity, 10.0 / 11.0, 1e-15);
  // Exactly at the threshold counts as a duplicate.
  EXPECT_EQ(dedup_repositories({repo_of("a", numbered(0, 10)), repo_of("b", eleven)}, 10.0 / 11.0).kept.size(), 1u);
}

TEST(Dedup, IdempotentAndSurvivorsBelowThreshold) {
  // Base repositories plus exact copies, one-file extensions (10/11, removed)
  // and one-file edits (9/11, kept), shuffled by repo_id.
  std::mt19937_64 rng(3);
  std::vector<Repository> repos;
  for (int i = 0; i < 15; ++i) {
    const auto base = numbered(100 * i, 100 * i + 10);
    repos.push_back(repo_of("r" + std::to_string(rng() % 100000), base));
    auto grown = base;
    grown.push_back("extra " + std::to_string(i));
    auto edited = base;
    edited[3] = "edited " + std::to_string(i);
    switch (rng() % 3) {
      case 0: repos.push_back(repo_of("r" + std::to_string(rng() % 100000), base)); break;
      case 1: repos.push_back(repo_of("r" + std::to_string(rng() % 100000), grown)); break;
      default: repos.push_back(repo_of("r" + std::to_string(rng() % 100000), edited)); break;
    }
  }
  const auto once = dedup_repositories(repos);
  EXPECT_EQ(once.kept.size() + once.removed.size(), repos.size());
  EXPECT_FALSE(once.removed.empty());
  const auto twice = dedup_repositories(once.kept);
  EXPECT_TRUE(twice.removed.empty());
  ASSERT_EQ(twice.kept.size(), once.kept.size());
  for (std::size_t i = 0; i < once.kept.size(); ++i) {
    EXPECT_EQ(twice.kept[i].repo_id, once.kept[i].repo_id);
    for (std::size_t j = i + 1; j < once.kept.size(); ++j) {
      EXPECT_LT(jaccard(file_hash_set(once.kept[i]), file_hash_set(once.kept[j])), 0.9);
    }
  }
}

TEST(Decontaminate, PlantedNgramIsRemovedShorterRunIsKept) {
  const std::string gram = "a1 a2 a3 a4 a5 a6 a7 a8 a9 a10";
  const std::vector<Document> test{{"t", "lang0", "zz " + gram + " zz"}};
  const std::vector<Document> corpus{{"hit", "lang0", "q w e\n" + gram + "\tr"},
                                     {"near", "lang0", "a1 a2 a3 a4 a5 a6 a7 a8 a9 b10"},
                                     {"split", "lang0", "a1 a2 a3 a4 a5 a6 a7 a8 a9a10"}};
  const auto r = decontaminate(corpus, test, 10);
  ASSERT_EQ(r.removed.size(), 1u);
  EXPECT_EQ(r.removed[0].doc_id, "hit");
  EXPECT_EQ(r.removed[0].ngram, gram);
  ASSERT_EQ(r.kept.size(), 2u);
  EXPECT_EQ(r.kept[0].doc_id, "near");
}

TEST(Decontaminate, EdgeCases) {
  const std::vector<Document> corpus{{"a", "lang0", "x y z"}};
  EXPECT_EQ(decontaminate(corpus, {}, 10).kept, corpus);
  EXPECT_THROW(decontaminate(corpus, {}, 0), ContractError);
  // Tokens are compared raw: no case folding.
  EXPECT_EQ(decontaminate(corpus, {{"t", "lang0", "X Y Z"}}, 3).kept.size(), 1u);
  EXPECT_EQ(decontaminate(corpus, {{"t", "lang0", "x y z"}}, 3).kept.size(), 0u);
}

std::set<std::vector<std::string>> ngrams_of(const std::string& text, std::size_t n) {
  std::istringstream in(text);
  std::vector<std::string> toks;
  for (std::string t; in >> t;) toks.push_back(t);
  std::set<std::vector<std::string>> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) out.emplace(toks.begin() + i, toks.begin() + i + n);
  return out;
}

TEST(Decontaminate, MatchesBruteForceIntersection) {
  std::mt19937_64 rng(17);
  const std::vector<std::string> words{"let", "in", "x", "f", "(", ")", "->"};
  const char* gaps[] = {" ", "  ", "\t", "\n", " \r\n"};
  auto make = [&](const std::string& id) {
    std::string text;
    const std::size_t len = 10 + rng() % 30;
    for (std::size_t i = 0; i < len; ++i) text += words[rng() % words.size()] + gaps[rng() % 5];
    return Document{id, "lang0", text};
  };
  for (std::size_t n : {4u, 5u, 6u}) {
    std::vector<Document> corpus, test;
    for (int i = 0; i < 200; ++i) corpus.push_back(make("d" + std::to_string(i)));
    for (int i = 0; i < 20; ++i) test.push_back(make("t" + std::to_string(i)));

    std::set<std::vector<std::string>> test_grams;
    for (const auto& t : test) {
      const auto g = ngrams_of(t.text, n);
      test_grams.insert(g.begin(), g.end());
    }
    std::set<std::string> expected_removed;
    for (const auto& d : corpus) {
      for (const auto& g : ngrams_of(d.text, n)) {
        if (test_grams.count(g)) {
          expected_removed.insert(d.doc_id);
          break;
        }
      }
    }
    const auto r = decontaminate(corpus, test, n);
    std::set<std::string> removed;
    for (const auto& x : r.removed) removed.insert(x.doc_id);
    EXPECT_EQ(removed, expected_removed) << "n=" << n;
    EXPECT_EQ(r.kept.size() + r.removed.size(), corpus.size());
    EXPECT_FALSE(removed.empty());
    EXPECT_LT(removed.size(), corpus.size());
  }
}

TEST(Synthetic, DeterministicPerSeed) {
  const auto a = generate_synthetic_corpus(5, "lang1", 8, 400);
  const auto b = generate_synthetic_corpus(5, "lang1", 8, 400);
  const auto c = generate_synthetic_corpus(6, "lang1", 8, 400);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (const auto& d : a) {
    EXPECT_GE(d.text.size(), 400u);
    EXPECT_TRUE(filter_file({d.doc_id, "x", d.text, d.language}).keep);
  }
  EXPECT_THROW(generate_synthetic_corpus(5, "cobol", 1, 100), TagError);
}

TEST(Synthetic, SharedCoreAppearsInEveryLanguageAndMarkersInOne) {
  for (std::size_t l = 0; l < 3; ++l) {
    std::string all;
    for (const auto& d : generate_synthetic_corpus(1, default_languages()[l], 30, 600)) all += d.text;
    for (const auto& kw : shared_core_keywords()) EXPECT_NE(all.find(kw), std::string::npos) << l << " " << kw;
    for (const auto& kw : language_keywords(l)) EXPECT_NE(all.find(kw), std::string::npos) << l << " " << kw;
  }
}

// Byte-bigram naive Bayes trained on one seed, scored on another.
TEST(Synthetic, LanguagesAreSeparableByBigrams) {
  std::vector<std::map<int, double>> logp(3);
  for (std::size_t l = 0; l < 3; ++l) {
    std::map<int, double> counts;
    double total = 0;
    for (const auto& d : generate_synthetic_corpus(100, default_languages()[l], 100, 600)) {
      for (std::size_t i = 1; i < d.text.size(); ++i) {
        counts[static_cast<unsigned char>(d.text[i - 1]) * 256 + static_cast<unsigned char>(d.text[i])] += 1;
        total += 1;
      }
    }
    for (int k = 0; k < 65536; ++k) logp[l][k] = std::log((counts[k] + 0.5) / (total + 0.5 * 65536));
  }
  std::size_t correct = 0, seen = 0;
  for (std::size_t l = 0; l < 3; ++l) {
    for (const auto& d : generate_synthetic_corpus(200, default_languages()[l], 100, 600)) {
      std::array<double, 3> score{};
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 1; i < d.text.size(); ++i) {
          score[c] += logp[c][static_cast<unsigned char>(d.text[i - 1]) * 256 + static_cast<unsigned char>(d.text[i])];
        }
      }
      const auto best = std::max_element(score.begin(), score.end()) - score.begin();
      correct += static_cast<std::size_t>(best) == l;
      ++seen;
    }
  }
  EXPECT_GE(static_cast<double>(correct) / seen, 0.95);
}

TEST(Tokenize, ByteRoundTrip) {
  std::string all;
  for (int b = 0; b < 256; ++b) all.push_back(static_cast<char>(b));
  const auto ids = tokenize(all);
  ASSERT_EQ(ids.size(), 256u);
  for (int b = 0; b < 256; ++b) EXPECT_EQ(ids[b], b);
  EXPECT_EQ(detokenize(ids), all);
  EXPECT_EQ(tokenize("\xce\xbb").size(), 2u);
}

class CorpusFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("fpmoe_corpus_test_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(CorpusFiles, JsonlRoundTrip) {
  const std::vector<Document> docs{{"a", "lang0", "line\nwith \"quotes\"\t\xce\xbb"}, {"b", "lang2", ""}};
  EXPECT_EQ(from_jsonl(to_jsonl(docs)), docs);
  write_documents(dir_ / "d.jsonl", docs);
  EXPECT_EQ(read_documents(dir_ / "d.jsonl"), docs);
  EXPECT_THROW(from_jsonl("{\"doc_id\": 1}\n"), ContractError);
  EXPECT_THROW(read_documents(dir_ / "none.jsonl"), IoError);
}

TEST_F(CorpusFiles, RepositoryTreeRoundTrip) {
  auto repos = generate_synthetic_repositories(9, "lang2", 3, 300);
  auto more = generate_synthetic_repositories(9, "lang0", 2, 300);
  repos.insert(repos.end(), more.begin(), more.end());
  write_repositories(dir_ / "tree", repos);
  auto back = read_repositories(dir_ / "tree");
  auto key = [](const Repository& r) { return r.repo_id; };
  std::sort(repos.begin(), repos.end(), [&](auto& a, auto& b) { return key(a) < key(b); });
  std::sort(back.begin(), back.end(), [&](auto& a, auto& b) { return key(a) < key(b); });
  ASSERT_EQ(back.size(), repos.size());
  for (std::size_t i = 0; i < repos.size(); ++i) {
    EXPECT_EQ(back[i].language, repos[i].language);
    EXPECT_EQ(concat_repository(back[i].files), concat_repository(repos[i].files));
  }
}

TEST(Manifest, DescribeCountsPerLanguage) {
  const std::vector<Document> docs{{"a", "lang0", "abc"}, {"b", "lang0", "de"}, {"c", "lang1", "f"}};
  const auto m = describe(docs);
  EXPECT_EQ(m.languages.at("lang0").tokens, 5u);
  EXPECT_EQ(m.languages.at("lang0").repos, 2u);
  EXPECT_EQ(m.languages.at("lang1").tokens, 1u);
  const auto repos = generate_synthetic_repositories(1, "lang1", 4, 200, {.files_per_repo = 3});
  const auto mr = describe(repos);
  EXPECT_EQ(mr.languages.at("lang1").files, 12u);
  EXPECT_EQ(mr.languages.at("lang1").repos, 4u);
  EXPECT_NE(corpus_hash(docs), corpus_hash({docs[0], docs[1]}));
  EXPECT_EQ(corpus_hash(docs), corpus_hash(docs));
}

}  // namespace
}  // namespace fpmoe::corpus
