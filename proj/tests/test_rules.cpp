#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

#include "irecs/rules.hpp"
#include "rule_oracle.hpp"

using namespace irecs;
using namespace oracle;

namespace {

const Rule kFig3 = rule_of({plain(num(Field::nCites, Comparator::gt, 20)),
                            plain(words(Field::title, Comparator::containsAny, {"slr", "autom"}))});

}  // namespace

TEST_CASE("matching examples") {
  CHECK(matches_antecedent(kFig3, paper("a", true, "An SLR tool", 25)));
  CHECK_FALSE(matches_antecedent(kFig3, paper("b", true, "Mapping study support", 25)));
  CHECK_FALSE(matches_antecedent(kFig3, paper("c", true, "SLR automation", 10)));
  CHECK(matches_antecedent(kFig3, paper("d", true, "Automating selection", 21)));

  auto not_recent = rule_of({Clause{true, {num(Field::year, Comparator::ge, 2010)}}});
  CHECK(matches_antecedent(not_recent, paper("e", true, "", std::nullopt, 2005)));
  CHECK_FALSE(matches_antecedent(not_recent, paper("f", true, "", std::nullopt, 2015)));
}

TEST_CASE("absent fields never satisfy a condition") {
  auto r = paper("x", true, "slr", std::nullopt);
  CHECK_FALSE(matches_antecedent(rule_of({plain(num(Field::nCites, Comparator::ge, 0))}), r));
  CHECK_FALSE(matches_antecedent(rule_of({Clause{true, {num(Field::nCites, Comparator::ge, 0)}}}), r));
}

TEST_CASE("support counts agreeing matches over the dataset") {
  Dataset d("s", {paper("1", true, "defect model"), paper("2", true, "defect"), paper("3", false, "review"),
                  paper("4", false, "model")});
  auto defect = rule_of({plain(words(Field::title, Comparator::containsAny, {"defect"}))});
  CHECK(support(defect, d) == 0.5);
  auto none = rule_of({plain(words(Field::title, Comparator::containsAny, {"absent"}))});
  CHECK(support(none, d) == 0.0);
  CHECK_FALSE(confidence(none, d).has_value());

  Dataset all_pos("s", {paper("1", true, "x defect"), paper("2", true, "defect y")});
  CHECK(support(defect, all_pos) == 1.0);
  CHECK(confidence(defect, all_pos) == 1.0);
  CHECK_THROWS_AS(support(defect, Dataset()), ParameterError);
}

TEST_CASE("confidence is agreeing over all antecedent matches") {
  Dataset d("c", {paper("1", true, "defect"), paper("2", true, "defect"), paper("3", true, "defect"),
                  paper("4", false, "defect"), paper("5", false, "other")});
  auto r = rule_of({plain(words(Field::title, Comparator::containsAny, {"defect"}))});
  CHECK(confidence(r, d) == 0.75);
}

TEST_CASE("fitness examples") {
  Dataset d("f", {paper("p1", true, "defect"), paper("p2", true, "defect"), paper("n1", false, "defect"),
                  paper("n2", false, "model"), paper("n3", false, "model"), paper("n4", false, "review")});
  auto r = rule_of({plain(words(Field::title, Comparator::containsAny, {"defect"}))});
  CHECK(fitness(r, d) == 0.75);

  Dataset ideal("i", {paper("p1", true, "defect"), paper("n1", false, "model")});
  CHECK(fitness(r, ideal) == 1.0);
  auto everything = rule_of({plain(words(Field::title, Comparator::containsAny, {"defect", "model", "review"}))});
  CHECK(fitness(everything, d) == 0.0);

  Dataset single("s", {paper("p1", true, "defect")});
  CHECK_THROWS_AS(fitness(r, single), ParameterError);
}

TEST_CASE("indexed measures equal the brute-force oracle", "[property]") {
  std::mt19937_64 rng(99);
  for (int ds = 0; ds < 10; ++ds) {
    auto d = random_dataset(rng, 40 + rng() % 40);
    CoverageIndex index(d);
    for (int k = 0; k < 200; ++k) {
      auto r = random_rule(rng);
      validate(r);
      std::size_t pos = 0, neg = 0, matched = 0, agree = 0;
      for (const auto& rec : d.records()) {
        (rec.label ? pos : neg) += 1;
        if (Oracle::matches(r, rec)) {
          ++matched;
          if (rec.label == r.predicted_class) ++agree;
        }
      }
      auto m = index.measures(r);
      REQUIRE(m.matches() == matched);
      REQUIRE(m.agreeing() == agree);
      CHECK(m.support() == static_cast<double>(agree) / static_cast<double>(d.size()));
      CHECK(support(r, d) == m.support());
      if (matched == 0) {
        CHECK_FALSE(confidence(r, d).has_value());
      } else {
        CHECK(*confidence(r, d) == static_cast<double>(agree) / static_cast<double>(matched));
      }
      CHECK(m.support() <= static_cast<double>(matched) / static_cast<double>(d.size()));
      const double f = m.fitness();
      CHECK(f >= -1.0);
      CHECK(f <= 1.0);
      for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(matches_antecedent(r, d[i]) == Oracle::matches(r, d[i]));
      }
    }
  }
}

TEST_CASE("fitness of the opposite consequent is the negation", "[property]") {
  std::mt19937_64 rng(7);
  auto d = random_dataset(rng, 60);
  CoverageIndex index(d);
  for (int k = 0; k < 300; ++k) {
    auto r = random_rule(rng);
    auto flipped = r;
    flipped.predicted_class = !r.predicted_class;
    auto m = index.measures(r);
    auto mf = index.measures(flipped);
    const double pos_cov = static_cast<double>(m.pos_matches) / static_cast<double>(m.positives);
    const double neg_cov = static_cast<double>(m.neg_matches) / static_cast<double>(m.negatives);
    CHECK(m.fitness() == -mf.fitness());
    CHECK((r.predicted_class ? m : mf).fitness() == pos_cov - neg_cov);
    CHECK(index.measures(r) == m);
  }
}

TEST_CASE("index over a subset of rows sees only those rows") {
  std::mt19937_64 rng(3);
  auto d = random_dataset(rng, 50);
  auto cache = stem_cache(d);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < d.size(); i += 2) rows.push_back(i);
  CoverageIndex sub(d, cache, rows);
  auto sub_data = d.subset(rows);
  CoverageIndex direct(sub_data);
  for (int k = 0; k < 100; ++k) {
    auto r = random_rule(rng);
    CHECK(sub.measures(r) == direct.measures(r));
  }
}

TEST_CASE("rendering and parsing") {
  auto fig3 = rule_of({plain(num(Field::nCites, Comparator::gt, 20)),
                       plain(words(Field::title, Comparator::containsAny, {"SLR", "automation"}))});
  CHECK(render(fig3) == "IF nCites > 20 AND title containsAny {SLR, automation} THEN isCandidate = True");
  auto neg = rule_of({plain(words(Field::abstract, Comparator::containsAll, {"survey"}))}, false);
  CHECK(render(neg) == "IF abstract containsAll {survey} THEN isCandidate = False");
  auto typed = rule_of({Clause{true, {num(Field::year, Comparator::le, 2001), words(Field::paperType, Comparator::equals, {"journal"})}}});
  CHECK(render(typed) == "IF NOT (year <= 2001 AND paperType = journal) THEN isCandidate = True");

  CHECK(parse_rule(render(fig3)) == fig3);
  CHECK(parse_rule(render(typed)) == typed);
  CHECK_THROWS_AS(parse_rule("IF nCites ~ 3 THEN isCandidate = True"), LoadError);
  CHECK_THROWS_AS(parse_rule("IF title > 3 THEN isCandidate = True"), LoadError);
  CHECK_THROWS_AS(parse_rule("IF title containsAny {a} THEN isCandidate = Maybe"), LoadError);
}

TEST_CASE("render is a fixed point of parse", "[property]") {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 500; ++k) {
    auto r = random_rule(rng);
    auto text = render(r);
    auto back = parse_rule(text);
    CHECK(back == r);
    CHECK(render(back) == text);
  }
}

TEST_CASE("condition invariants are enforced") {
  CHECK_THROWS_AS(validate(num(Field::title, Comparator::gt, 3)), ParameterError);
  CHECK_THROWS_AS(validate(words(Field::nCites, Comparator::containsAny, {"a"})), ParameterError);
  CHECK_THROWS_AS(validate(words(Field::title, Comparator::equals, {"a"})), ParameterError);
  CHECK_THROWS_AS(validate(words(Field::title, Comparator::containsAny, {})), ParameterError);
  CHECK_THROWS_AS(validate(words(Field::paperType, Comparator::equals, {"journal", "conference"})), ParameterError);
  CHECK_NOTHROW(validate(words(Field::paperType, Comparator::containsAny, {"journal", "conference"})));
}
