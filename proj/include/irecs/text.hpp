#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "irecs/common.hpp"
#include "irecs/corpus.hpp"
#include "irecs/porter.hpp"

namespace irecs {

// Warning sink shared by the library. Defaults to stderr; tests and the CLI
// may redirect it.
inline std::function<void(const std::string&)>& warning_sink() {
  static std::function<void(const std::string&)> sink = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(const std::string& msg) {
  if (warning_sink()) warning_sink()(msg);
}

/// English stopword list (the 179-word list distributed with NLTK).
inline const std::unordered_set<std::string>& english_stopwords() {
  static const std::unordered_set<std::string> words = {
      "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're", "you've",
      "you'll", "you'd", "your", "yours", "yourself", "yourselves", "he", "him", "his",
      "himself", "she", "she's", "her", "hers", "herself", "it", "it's", "its", "itself",
      "they", "them", "their", "theirs", "themselves", "what", "which", "who", "whom", "this",
      "that", "that'll", "these", "those", "am", "is", "are", "was", "were", "be", "been",
      "being", "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an", "the",
      "and", "but", "if", "or", "because", "as", "until", "while", "of", "at", "by", "for",
      "with", "about", "against", "between", "into", "through", "during", "before", "after",
      "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over", "under",
      "again", "further", "then", "once", "here", "there", "when", "where", "why", "how",
      "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no", "nor",
      "not", "only", "own", "same", "so", "than", "too", "very", "s", "t", "can", "will",
      "just", "don", "don't", "should", "should've", "now", "d", "ll", "m", "o", "re", "ve",
      "y", "ain", "aren", "aren't", "couldn", "couldn't", "didn", "didn't", "doesn",
      "doesn't", "hadn", "hadn't", "hasn", "hasn't", "haven", "haven't", "isn", "isn't", "ma",
      "mightn", "mightn't", "mustn", "mustn't", "needn", "needn't", "shan", "shan't",
      "shouldn", "shouldn't", "wasn", "wasn't", "weren", "weren't", "won", "won't",
      "wouldn", "wouldn't"};
  return words;
}

/// Lowercases, splits on anything that is not a letter (ASCII digits and
/// punctuation are separators, non-ASCII bytes stay inside tokens), drops
/// stopwords and Porter-stems what remains.
inline std::vector<std::string> tokenize_stem(std::string_view text) {
  std::vector<std::string> out;
  const auto& stop = english_stopwords();
  const PorterStemmer stem;
  std::string token;
  auto flush = [&] {
    if (!token.empty()) {
      if (!stop.contains(token)) {
        auto s = stem(token);
        if (!s.empty()) out.push_back(std::move(s));
      }
      token.clear();
    }
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalpha(c) || c >= 0x80) {
      token.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

/// Sorted, duplicate-free stems.
inline std::vector<std::string> stem_set(std::string_view text) {
  auto stems = tokenize_stem(text);
  std::sort(stems.begin(), stems.end());
  stems.erase(std::unique(stems.begin(), stems.end()), stems.end());
  return stems;
}

/// score(t) = max over documents of (count(t,d)/|d|) * ln(N/df(t)).
inline std::map<std::string, double> tfidf_scores(const std::vector<std::vector<std::string>>& documents) {
  if (documents.empty()) throw ParameterError("tfidf_scores: no documents");
  const double n_docs = static_cast<double>(documents.size());

  std::map<std::string, std::size_t> df;
  std::vector<std::map<std::string, std::size_t>> counts(documents.size());
  for (std::size_t d = 0; d < documents.size(); ++d) {
    for (const auto& t : documents[d]) ++counts[d][t];
    for (const auto& [t, _] : counts[d]) ++df[t];
  }

  std::map<std::string, double> scores;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    const double len = static_cast<double>(documents[d].size());
    for (const auto& [t, c] : counts[d]) {
      const double idf = std::log(n_docs / static_cast<double>(df[t]));
      const double s = (static_cast<double>(c) / len) * idf;
      auto [it, inserted] = scores.emplace(t, s);
      if (!inserted) it->second = std::max(it->second, s);
    }
  }
  return scores;
}

enum class VocabularySource { positive, negative, relevant, user };

/// Scored stems, sorted by score descending then stem ascending.
struct Vocabulary {
  struct Term {
    std::string stem;
    double score = 0.0;
    friend bool operator==(const Term&, const Term&) = default;
  };

  std::vector<Term> terms;
  VocabularySource source = VocabularySource::user;

  bool contains(std::string_view stem) const {
    return std::any_of(terms.begin(), terms.end(), [&](const Term& t) { return t.stem == stem; });
  }
  std::vector<std::string> stems() const {
    std::vector<std::string> out;
    out.reserve(terms.size());
    for (const auto& t : terms) out.push_back(t.stem);
    return out;
  }
  std::size_t size() const { return terms.size(); }
  bool empty() const { return terms.empty(); }
};

inline void sort_terms(std::vector<Vocabulary::Term>& terms) {
  std::sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.stem < b.stem;
  });
}

/// TF-IDF vocabulary over title + abstract of the records carrying `target_label`.
inline Vocabulary class_vocabulary(const Dataset& dataset, bool target_label, std::size_t top_k) {
  if (top_k < 1) throw ParameterError("class_vocabulary: top_k must be >= 1");
  Vocabulary vocab;
  vocab.source = target_label ? VocabularySource::positive : VocabularySource::negative;

  std::vector<std::vector<std::string>> docs;
  for (const auto& r : dataset.records()) {
    if (r.label == target_label) docs.push_back(tokenize_stem(r.title + " " + r.abstract));
  }
  if (docs.empty()) {
    warn(std::string("no ") + (target_label ? "positive" : "negative") +
         " records; vocabulary is empty");
    return vocab;
  }
  for (auto& [stem, score] : tfidf_scores(docs)) vocab.terms.push_back({stem, score});
  sort_terms(vocab.terms);
  if (vocab.terms.size() > top_k) vocab.terms.resize(top_k);
  return vocab;
}

/// Stems of `pos` absent from `neg`, keeping pos scores and order.
inline Vocabulary relevant_vocabulary(const Vocabulary& pos, const Vocabulary& neg) {
  std::unordered_set<std::string> excluded;
  for (const auto& t : neg.terms) excluded.insert(t.stem);
  Vocabulary out;
  out.source = VocabularySource::relevant;
  for (const auto& t : pos.terms) {
    if (!excluded.contains(t.stem)) out.terms.push_back(t);
  }
  return out;
}

/// Reads a user vocabulary: one stem per line, optionally followed by a tab
/// and a score. Blank lines and lines starting with '#' are ignored.
inline Vocabulary parse_vocabulary(std::string_view text) {
  Vocabulary v;
  v.source = VocabularySource::user;
  std::unordered_set<std::string> seen;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(start, end - start));
    ++lineno;
    start = end + 1;
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    double score = 0.0;
    auto tab = line.find('\t');
    std::string stem = to_lower(trim(line.substr(0, tab)));
    if (tab != std::string_view::npos) {
      const std::string num(trim(line.substr(tab + 1)));
      try {
        std::size_t used = 0;
        score = std::stod(num, &used);
        if (used != num.size()) throw std::invalid_argument(num);
      } catch (const std::exception&) {
        throw LoadError("vocabulary line " + std::to_string(lineno) + ": bad score '" + num + "'");
      }
    }
    if (stem.find_first_of(" \t") != std::string::npos) {
      throw LoadError("vocabulary line " + std::to_string(lineno) + ": stems cannot contain spaces");
    }
    if (seen.insert(stem).second) v.terms.push_back({stem, score});
    if (end == text.size()) break;
  }
  sort_terms(v.terms);
  return v;
}

inline Vocabulary load_vocabulary(const std::string& path) {
  try {
    return parse_vocabulary(read_file(path));
  } catch (const LoadError& e) {
    throw LoadError(path + ": " + e.what());
  }
}

inline std::string serialize_vocabulary(const Vocabulary& v) {
  std::string out;
  char buf[64];
  for (const auto& t : v.terms) {
    std::snprintf(buf, sizeof buf, "%.17g", t.score);
    out += t.stem + '\t' + buf + '\n';
  }
  return out;
}

}  // namespace irecs
