#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "irecs/text.hpp"

using namespace irecs;
using Catch::Approx;

namespace {

struct SilenceWarnings {
  std::vector<std::string> seen;
  std::function<void(const std::string&)> saved = warning_sink();
  SilenceWarnings() {
    warning_sink() = [this](const std::string& m) { seen.push_back(m); };
  }
  ~SilenceWarnings() { warning_sink() = saved; }
};

PaperRecord rec(std::string id, std::string title, std::string abstract, bool label) {
  PaperRecord r;
  r.id = std::move(id);
  r.title = std::move(title);
  r.abstract = std::move(abstract);
  r.label = label;
  return r;
}

Vocabulary vocab_of(std::vector<std::pair<std::string, double>> items, VocabularySource src) {
  Vocabulary v;
  v.source = src;
  for (auto& [s, x] : items) v.terms.push_back({s, x});
  sort_terms(v.terms);
  return v;
}

}  // namespace

TEST_CASE("porter stemmer matches the reference vectors") {
  std::ifstream in(std::string(IRECS_TEST_DATA) + "/porter_vectors.tsv");
  REQUIRE(in);
  std::string line;
  std::size_t n = 0, bad = 0;
  while (std::getline(in, line)) {
    auto tab = line.find('\t');
    auto word = line.substr(0, tab);
    auto expected = line.substr(tab + 1);
    if (porter_stem(word) != expected) {
      ++bad;
      UNSCOPED_INFO(word << " -> " << porter_stem(word) << ", expected " << expected);
    }
    ++n;
  }
  CHECK(n > 2000);
  CHECK(bad == 0);
}

TEST_CASE("tokenize_stem examples") {
  CHECK(tokenize_stem("Predicting software defects") == std::vector<std::string>{"predict", "softwar", "defect"});
  CHECK(tokenize_stem("").empty());
  CHECK(tokenize_stem("the of and").empty());
  CHECK(tokenize_stem("Systematic-reviews, 2nd ed.") == std::vector<std::string>{"systemat", "review", "nd", "ed"});
}

TEST_CASE("tokenize_stem is idempotent on porter fixed points", "[property]") {
  std::ifstream in(std::string(IRECS_TEST_DATA) + "/porter_vectors.tsv");
  std::string line;
  std::vector<std::string> fixed;
  while (std::getline(in, line)) {
    auto tab = line.find('\t');
    auto stem = line.substr(tab + 1);
    if (porter_stem(stem) == stem && !english_stopwords().contains(stem)) fixed.push_back(stem);
  }
  REQUIRE(fixed.size() > 100);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> words;
    std::string text;
    for (int i = 0; i < 6; ++i) {
      words.push_back(fixed[rng() % fixed.size()]);
      text += words.back() + " ";
    }
    CHECK(tokenize_stem(text) == words);
  }
}

TEST_CASE("tfidf examples") {
  auto ubiquitous = tfidf_scores({{"a", "b"}, {"a"}, {"a", "c"}});
  CHECK(ubiquitous.at("a") == 0.0);

  auto two = tfidf_scores({{"x", "y"}, {"y"}});
  CHECK(two.at("x") == Approx(0.5 * std::log(2.0)));
  CHECK(two.at("y") == 0.0);

  auto single = tfidf_scores({{"p", "q", "p"}});
  for (const auto& [t, s] : single) CHECK(s == 0.0);

  CHECK_THROWS_AS(tfidf_scores({}), ParameterError);
}

TEST_CASE("tfidf ranking on a tiny corpus matches a hand-scored table") {
  // docs: {defect predict defect defect}, {defect model}, {review model model}, {review}
  // N=4; df: defect 2, predict 1, model 2, review 2
  const double l2 = std::log(2.0), l4 = std::log(4.0);
  std::vector<std::vector<std::string>> docs = {
      {"defect", "predict", "defect", "defect"}, {"defect", "model"}, {"review", "model", "model"}, {"review"}};
  auto s = tfidf_scores(docs);
  CHECK(s.at("defect") == Approx(3.0 / 4.0 * l2));
  CHECK(s.at("predict") == Approx(1.0 / 4.0 * l4));
  CHECK(s.at("model") == Approx(2.0 / 3.0 * l2));
  CHECK(s.at("review") == Approx(1.0 * l2));

  std::vector<PaperRecord> recs = {rec("1", "defect predict", "defect defect", true), rec("2", "defect", "model", true),
                                   rec("3", "review model", "model", true), rec("4", "", "review", true)};
  auto v = class_vocabulary(Dataset("t", recs), true, 3);
  // review .693, defect .520, model .462, predict .347
  REQUIRE(v.size() == 3);
  CHECK(v.terms[0].stem == "review");
  CHECK(v.terms[1].stem == "defect");
  CHECK(v.terms[2].stem == "model");
}

TEST_CASE("tfidf is invariant to document order", "[property]") {
  std::mt19937_64 rng(11);
  const std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f", "g"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<std::string>> docs(2 + rng() % 6);
    for (auto& d : docs) {
      const auto len = 1 + rng() % 8;
      for (std::size_t i = 0; i < len; ++i) d.push_back(pool[rng() % pool.size()]);
    }
    auto before = tfidf_scores(docs);
    std::shuffle(docs.begin(), docs.end(), rng);
    auto after = tfidf_scores(docs);
    REQUIRE(before.size() == after.size());
    for (const auto& [t, x] : before) {
      CHECK(x >= 0.0);
      CHECK(after.at(t) == Approx(x));
    }
  }
}

TEST_CASE("class vocabulary picks the separating stem and truncates") {
  std::vector<PaperRecord> recs = {
      rec("1", "defect prediction", "we predict defect counts", true),
      rec("2", "defect density", "static analysis of defect data", true),
      rec("3", "user interfaces", "a study of usability", false),
      rec("4", "agile teams", "an interview study", false),
      rec("5", "defect taxonomies", "classification scheme", true),
  };
  Dataset d("t", recs);
  auto pos = class_vocabulary(d, true, 100);
  CHECK(pos.contains("defect"));
  CHECK_FALSE(class_vocabulary(d, false, 100).contains("defect"));
  CHECK(class_vocabulary(d, true, 1).size() == 1);
  CHECK_THROWS_AS(class_vocabulary(d, true, 0), ParameterError);
}

TEST_CASE("missing class gives an empty vocabulary and a warning") {
  SilenceWarnings w;
  Dataset d("t", {rec("1", "a b", "c", true)});
  auto v = class_vocabulary(d, false, 10);
  CHECK(v.empty());
  CHECK(w.seen.size() == 1);
}

TEST_CASE("relevant vocabulary is the stem difference") {
  auto abc = vocab_of({{"a", 3}, {"b", 2}, {"c", 1}}, VocabularySource::positive);
  auto r1 = relevant_vocabulary(abc, vocab_of({{"b", 9}}, VocabularySource::negative));
  CHECK(r1.stems() == std::vector<std::string>{"a", "c"});
  CHECK(r1.source == VocabularySource::relevant);

  auto r2 = relevant_vocabulary(abc, vocab_of({{"a", 1}, {"b", 1}, {"c", 1}, {"z", 1}}, VocabularySource::negative));
  CHECK(r2.empty());

  auto abcd = vocab_of({{"a", 4}, {"b", 3}, {"c", 2}, {"d", 1}}, VocabularySource::positive);
  auto r3 = relevant_vocabulary(abcd, vocab_of({{"c", 5}, {"d", 5}, {"e", 5}}, VocabularySource::negative));
  REQUIRE(r3.size() == 2);
  CHECK(r3.terms[0] == Vocabulary::Term{"a", 4});
  CHECK(r3.terms[1] == Vocabulary::Term{"b", 3});
}

TEST_CASE("relevant vocabulary never shares stems with the negative one", "[property]") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<std::string, double>> p, n;
    for (int i = 0; i < 10; ++i) {
      const std::string s(1, static_cast<char>('a' + rng() % 15));
      if (rng() % 2) p.push_back({s, static_cast<double>(rng() % 100)});
      else n.push_back({s, 1.0});
    }
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end(), [](auto& x, auto& y) { return x.first == y.first; }), p.end());
    auto pos = vocab_of(p, VocabularySource::positive);
    auto neg = vocab_of(n, VocabularySource::negative);
    auto rel = relevant_vocabulary(pos, neg);
    for (const auto& t : rel.terms) CHECK_FALSE(neg.contains(t.stem));
    for (std::size_t i = 1; i < rel.terms.size(); ++i) CHECK(rel.terms[i - 1].score >= rel.terms[i].score);
  }
}

TEST_CASE("vocabulary files parse and round-trip") {
  auto v = parse_vocabulary("# user terms\nDefect\t2.5\n\nreview\npredict\t2.5\n");
  CHECK(v.source == VocabularySource::user);
  CHECK(v.stems() == std::vector<std::string>{"defect", "predict", "review"});
  auto back = parse_vocabulary(serialize_vocabulary(v));
  CHECK(back.terms == v.terms);
  CHECK_THROWS_AS(parse_vocabulary("a\tnot-a-number\n"), LoadError);
}
