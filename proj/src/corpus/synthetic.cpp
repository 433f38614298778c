// Three toy functional languages sharing one expression grammar. The core
// (identifiers, arithmetic, if/else, map/filter/fold, brackets) is common;
// surface syntax for application, lambdas, lists and declarations differs in
// the way Haskell, OCaml and Scala differ.

#include <algorithm>
#include <random>
#include <string>

#include "fpmoe/corpus.hpp"
#include "fpmoe/errors.hpp"

namespace fpmoe::corpus {

namespace {

const std::vector<std::string> kVars{"x", "y", "z", "xs", "ys", "acc", "n", "k", "v", "t"};
const std::vector<std::string> kFuncs{"walk",  "insert", "lookup", "merge", "split", "step",
                                      "total", "depth",  "size",   "apply", "go",    "combine"};
const std::vector<std::string> kTypes{"Tree", "Node", "Pair", "Expr", "Token", "State"};

class Generator {
 public:
  Generator(std::uint64_t seed, std::size_t lang) : lang_(lang) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(lang), 0x5eedu};
    rng_.seed(seq);
  }

  std::string file(std::size_t target) {
    std::string out = header();
    while (out.size() < target) out += statement() + "\n";
    return out;
  }

 private:
  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  const std::string& any(const std::vector<std::string>& v) { return v[pick(v.size())]; }
  bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }

  std::string header() {
    switch (lang_) {
      case 0: {
        const std::string name = any(kTypes);
        return "module " + name + " where\n\nimport Data.List\n\n";
      }
      case 1: return "open List\n\n";
      default: {
        const std::string name = any(kFuncs);
        return "package " + name + "\n\nimport scala.collection._\n\n";
      }
    }
  }

  std::string atom() {
    const auto r = pick(6);
    if (r < 3) return any(kVars);
    if (r < 5) return std::to_string(pick(10));
    return coin(0.5) ? "true" : "false";
  }

  std::string call(const std::string& f, const std::vector<std::string>& args) {
    if (lang_ == 2) {
      std::string s = f + "(";
      for (std::size_t i = 0; i < args.size(); ++i) s += (i ? ", " : "") + args[i];
      return s + ")";
    }
    std::string s = f;
    for (const auto& a : args) s += " " + a;
    return s;
  }

  std::string paren(const std::string& e) { return "(" + e + ")"; }

  std::string lambda(const std::string& var, const std::string& body) {
    switch (lang_) {
      case 0: return "(\\" + var + " -> " + body + ")";
      case 1: return "(fun " + var + " -> " + body + ")";
      default: return "(" + var + " => " + body + ")";
    }
  }

  std::string list_lit(const std::vector<std::string>& items) {
    const char* open = lang_ == 2 ? "List(" : "[";
    const char* close = lang_ == 2 ? ")" : "]";
    const char* sep = lang_ == 1 ? "; " : ", ";
    std::string s = open;
    for (std::size_t i = 0; i < items.size(); ++i) s += (i ? sep : "") + items[i];
    return s + close;
  }

  // Every random draw is bound to a named local first so that draw order does
  // not depend on the compiler's operand evaluation order.
  std::string expr(int depth) {
    if (depth <= 0) return atom();
    switch (pick(7)) {
      case 0: return atom();
      case 1: {
        static const std::vector<std::string> ops{"+", "-", "*"};
        const std::string lhs = expr(depth - 1);
        const std::string op = any(ops);
        const std::string rhs = expr(depth - 1);
        return lhs + " " + op + " " + rhs;
      }
      case 2: {
        const std::string f = any(kFuncs);
        std::vector<std::string> args;
        const auto n = 1 + pick(2);
        for (std::size_t i = 0; i < n; ++i) {
          const std::string e = expr(depth - 1);
          args.push_back(lang_ == 2 ? e : wrap(e));
        }
        return call(f, args);
      }
      case 3: {
        const std::string lhs = expr(depth - 1);
        const std::string cmp = coin(0.5) ? " > " : " == ";
        const std::string rhs = expr(depth - 1);
        const std::string yes = expr(depth - 1);
        const std::string no = expr(depth - 1);
        if (lang_ == 2) return "if (" + lhs + cmp + rhs + ") " + yes + " else " + no;
        return "if " + lhs + cmp + rhs + " then " + yes + " else " + no;
      }
      case 4: {
        const std::string var = any(kVars);
        const std::string f = lambda(var, expr(depth - 1));
        const std::string xs = any(kVars);
        const bool filt = coin(0.4);
        switch (lang_) {
          case 0: return (filt ? "filter " : "map ") + f + " " + xs;
          case 1: return (filt ? "List.filter " : "List.map ") + f + " " + xs;
          default: return xs + (filt ? ".filter" : ".map") + f;
        }
      }
      case 5: {
        const std::string var = any(kVars);
        const std::string f = lambda(var, expr(depth - 1));
        const std::string init = atom();
        const std::string xs = any(kVars);
        switch (lang_) {
          case 0: return "foldr " + f + " " + init + " " + xs;
          case 1: return "List.fold_left " + f + " " + init + " " + xs;
          default: return xs + ".foldLeft(" + init + ")" + f;
        }
      }
      default: {
        std::vector<std::string> items;
        const auto n = 1 + pick(3);
        for (std::size_t i = 0; i < n; ++i) items.push_back(atom());
        return list_lit(items);
      }
    }
  }

  std::string wrap(const std::string& e) {
    return e.find(' ') == std::string::npos ? e : paren(e);
  }

  // Curried parameter list (" x xs"); Scala declarations use scala_params.
  std::string params(std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += " " + kVars[(i * 3 + pick(3)) % kVars.size()];
    return s;
  }

  std::string scala_params(std::size_t n) {
    std::string s = "(";
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& var = kVars[(i * 3 + pick(3)) % kVars.size()];
      const char* type = coin(0.5) ? "Int" : "List[Int]";
      s += (i ? ", " : "") + var + ": " + type;
    }
    return s + ")";
  }

  std::string statement() {
    const std::string name = any(kFuncs);
    const std::size_t arity = 1 + pick(2);
    const auto kind = pick(5);
    if (kind == 0) {
      const std::string a = any(kTypes);
      const std::string b = any(kTypes);
      switch (lang_) {
        case 0: return "data " + a + " = Leaf | Branch " + b + " Int deriving Show\n";
        case 1: return "type " + a + " = Leaf | Branch of int\n";
        default: return "case class " + a + "(value: Int, next: Option[" + b + "])\n";
      }
    }
    if (kind == 1) {
      const std::string ps = lang_ == 2 ? scala_params(arity) : params(arity);
      const std::string var = any(kVars);
      const std::string first = expr(1);
      const std::string other = any(kVars);
      const std::string second = expr(2);
      switch (lang_) {
        case 0:
          return name + " :: " + std::string(arity == 1 ? "Int -> Int" : "Int -> [Int] -> Int") + "\n" + name + ps +
                 " = " + second + "\n  where " + var + " = " + first + "\n";
        case 1:
          return "let rec " + name + ps + " = match " + var + " with\n  | [] -> " + first + "\n  | " + other +
                 " :: rest -> " + second + "\n;;\n";
        default:
          return "def " + name + ps + ": Int = " + var + " match {\n  case Nil => " + first +
                 "\n  case h :: rest => " + second + "\n}\n";
      }
    }
    if (kind == 2) {
      const std::string var = any(kVars);
      const std::string body = expr(2);
      switch (lang_) {
        case 0: {
          const std::string shown = wrap(expr(1));
          return "main = do\n  let " + var + " = " + body + "\n  print " + shown + "\n";
        }
        case 1: return "let () = print_int " + paren(body) + "\n;;\n";
        default: return "object Main {\n  val " + var + " = " + body + "\n}\n";
      }
    }
    const std::string ps = lang_ == 2 ? scala_params(arity) : params(arity);
    const std::string body = expr(3);
    switch (lang_) {
      case 0: return name + ps + " = " + body + "\n";
      case 1: return "let " + name + ps + " = " + body + "\n;;\n";
      default: return "def " + name + ps + ": Int = " + body + "\n";
    }
  }

  std::size_t lang_;
  std::mt19937_64 rng_;
};

std::size_t language_index(const std::string& language) {
  const auto& langs = default_languages();
  const auto it = std::find(langs.begin(), langs.end(), language);
  if (it == langs.end()) throw TagError("unknown synthetic language '" + language + "'");
  return static_cast<std::size_t>(it - langs.begin());
}

const char* extension(std::size_t lang) {
  switch (lang) {
    case 0: return ".hs";
    case 1: return ".ml";
    default: return ".scala";
  }
}

}  // namespace

const std::vector<std::string>& shared_core_keywords() {
  static const std::vector<std::string> kw{"if", "else", "map", "filter", "(", ")"};
  return kw;
}

const std::vector<std::string>& language_keywords(std::size_t language_index) {
  static const std::vector<std::vector<std::string>> kw{
      {"where", "deriving", "data", "foldr", "main = do"},
      {"let rec", "with", "List.fold_left", ";;", "fun"},
      {"def", "val", "case class", "=>", "foldLeft"},
  };
  if (language_index >= kw.size()) throw TagError("unknown synthetic language index " + std::to_string(language_index));
  return kw[language_index];
}

std::vector<Repository> generate_synthetic_repositories(std::uint64_t seed, const std::string& language,
                                                        std::size_t n_repos, std::size_t doc_len,
                                                        const SyntheticOptions& options) {
  const std::size_t lang = language_index(language);
  if (options.files_per_repo == 0) throw ContractError("files_per_repo must be positive");
  Generator gen(seed, lang);
  const std::size_t per_file = std::max<std::size_t>(1, doc_len / options.files_per_repo);
  std::vector<Repository> repos;
  repos.reserve(n_repos);
  for (std::size_t r = 0; r < n_repos; ++r) {
    Repository repo;
    repo.repo_id = language + "-" + std::to_string(seed) + "-" + std::to_string(r);
    repo.language = language;
    for (std::size_t f = 0; f < options.files_per_repo; ++f) {
      repo.files.push_back({repo.repo_id, "src/m" + std::to_string(f) + extension(lang), gen.file(per_file), language});
    }
    repos.push_back(std::move(repo));
  }
  return repos;
}

std::vector<Document> generate_synthetic_corpus(std::uint64_t seed, const std::string& language, std::size_t n_docs,
                                                std::size_t doc_len, const SyntheticOptions& options) {
  return concat_repositories(generate_synthetic_repositories(seed, language, n_docs, doc_len, options));
}

}  // namespace fpmoe::corpus
