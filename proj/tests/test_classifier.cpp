#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "irecs/classifier.hpp"

using namespace irecs;

namespace {

PaperRecord paper(std::string id, bool label, std::string title, std::optional<std::int64_t> year = std::nullopt) {
  PaperRecord r;
  r.id = std::move(id);
  r.label = label;
  r.title = std::move(title);
  r.year = year;
  return r;
}

RuleMeasures counts(std::size_t pos, std::size_t neg, std::size_t pm, std::size_t nm, bool cls = true) {
  RuleMeasures m;
  m.records = pos + neg;
  m.positives = pos;
  m.negatives = neg;
  m.pos_matches = pm;
  m.neg_matches = nm;
  m.predicted_class = cls;
  return m;
}

// Six records; labels T T F F T T.
Dataset six() {
  return Dataset("six", {paper("r0", true, "alpha"), paper("r1", true, "alpha"), paper("r2", false, "beta"),
                         paper("r3", false, "beta"), paper("r4", true, "gamma"), paper("r5", true, "delta")});
}

// Loop of the selection algorithm re-run record by record.
std::vector<std::size_t> simulate_selection(const std::vector<Rule>& rules, const Dataset& d) {
  std::vector<bool> uncovered(d.size(), true);
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    if (std::none_of(uncovered.begin(), uncovered.end(), [](bool b) { return b; })) break;
    bool any = false;
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (uncovered[j] && matches_antecedent(rules[i], d[j]) && rules[i].predicted_class == d[j].label) {
        uncovered[j] = false;
        any = true;
      }
    }
    if (any) chosen.push_back(i);
  }
  return chosen;
}

const std::vector<std::string> kWords = {"alpha", "beta", "gamma", "delta", "epsilon", "zeta"};

Dataset random_dataset(std::mt19937_64& rng, std::size_t n) {
  std::vector<PaperRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    std::string title = kWords[rng() % kWords.size()] + " " + kWords[rng() % kWords.size()];
    recs.push_back(paper("p" + std::to_string(i), i % 3 == 0, title, 2000 + static_cast<std::int64_t>(rng() % 10)));
  }
  return Dataset("random", std::move(recs));
}

Rule random_rule(std::mt19937_64& rng) {
  Rule r;
  const auto n = 1 + rng() % 2;
  for (std::size_t k = 0; k < n; ++k) {
    Clause c;
    c.negated = rng() % 4 == 0;
    if (rng() % 2) {
      c.conditions.push_back(Condition{Field::title, Comparator::containsAny, std::vector<std::string>{kWords[rng() % kWords.size()]}});
    } else {
      c.conditions.push_back(Condition{Field::year, rng() % 2 ? Comparator::gt : Comparator::le,
                                       static_cast<std::int64_t>(2000 + rng() % 10)});
    }
    r.clauses.push_back(std::move(c));
  }
  r.predicted_class = rng() % 2;
  return r;
}

}  // namespace

TEST_CASE("strategy names parse case-insensitively") {
  for (auto s : {Strategy::cba, Strategy::cmar, Strategy::cpar, Strategy::scba}) {
    CHECK(parse_strategy(to_string(s)) == s);
    CHECK(parse_strategy(to_lower(to_string(s))) == s);
  }
  CHECK_FALSE(parse_strategy("cart").has_value());
}

TEST_CASE("score formulas on hand-computed tables") {
  // 3 of 4 matches agree; 4 positives and 6 negatives overall.
  const auto m = counts(4, 6, 3, 1);
  CHECK(scores::laplace(m) == Catch::Approx(4.0 / 6.0));
  CHECK(scores::chi_square(m) == Catch::Approx(10.0 * 196.0 / 576.0));
  CHECK(scores::weighted_confidence(m) == Catch::Approx(7.0 / 11.0));
  CHECK(scores::weighted_confidence(counts(4, 6, 0, 0)) == -2.0);
  CHECK(scores::chi_square(counts(4, 6, 0, 0)) == 0.0);
  CHECK(scores::confidence_or_floor(counts(4, 6, 0, 0)) == -1.0);
  // Negative-class rule: agreeing = negative matches.
  const auto neg = counts(4, 6, 1, 3, false);
  CHECK(scores::laplace(neg) == Catch::Approx(4.0 / 6.0));
  CHECK(scores::weighted_confidence(neg) == Catch::Approx((0.5 - 0.25) / (0.5 + 0.25)));
}

TEST_CASE("CBA puts the wider-coverage rule first") {
  Rule narrow = parse_rule("IF title containsAny {a} THEN isCandidate = True");
  narrow.measures = counts(20, 20, 3, 0);
  Rule wide = parse_rule("IF title containsAny {b} THEN isCandidate = True");
  wide.measures = counts(20, 20, 8, 2);
  const auto sorted = sort_rules({narrow, wide}, Strategy::cba);
  CHECK(sorted[0] == wide);
  CHECK(sorted[1] == narrow);
}

TEST_CASE("equal keys fall back to the shorter rule") {
  for (auto s : {Strategy::cba, Strategy::cmar, Strategy::cpar, Strategy::scba}) {
    Rule longer = parse_rule("IF title containsAny {a} AND year > 2000 THEN isCandidate = True");
    longer.measures = counts(10, 10, 4, 1);
    Rule shorter = parse_rule("IF title containsAny {z} THEN isCandidate = True");
    shorter.measures = counts(10, 10, 4, 1);
    const auto sorted = sort_rules({longer, shorter}, s);
    CHECK(sorted[0] == shorter);
  }
}

TEST_CASE("strategies disagree where their keys do") {
  // precise: 2 matches both agreeing. broad: 10 matches, 8 agreeing.
  Rule precise = parse_rule("IF title containsAny {a} THEN isCandidate = True");
  precise.measures = counts(10, 30, 2, 0);
  Rule broad = parse_rule("IF title containsAny {b} THEN isCandidate = True");
  broad.measures = counts(10, 30, 8, 2);
  CHECK(sort_rules({precise, broad}, Strategy::cba)[0] == broad);
  CHECK(sort_rules({broad, precise}, Strategy::cmar)[0] == precise);
  // laplace: precise 3/4 = 0.75, broad 9/12 = 0.75 -> tie, fitness decides (broad 0.733 > precise 0.2)
  CHECK(sort_rules({precise, broad}, Strategy::cpar)[0] == broad);
  CHECK(sort_rules({broad, precise}, Strategy::scba)[0] == precise);
}

TEST_CASE("sorting without measures is an internal error") {
  CHECK_THROWS_AS(sort_rules({parse_rule("IF year > 1 THEN isCandidate = True")}, Strategy::cba), InvariantError);
}

TEST_CASE("coverage selection: partition, shadowing, early stop") {
  const auto d = six();
  const CoverageIndex idx(d);

  SECTION("three rules partitioning the records are all kept in order") {
    std::vector<Rule> rules = {parse_rule("IF title containsAny {alpha} THEN isCandidate = True"),
                               parse_rule("IF title containsAny {beta} THEN isCandidate = False"),
                               parse_rule("IF title containsAny {gamma, delta} THEN isCandidate = True")};
    const auto sel = coverage_select(rules, idx);
    CHECK(sel.selected == std::vector<std::size_t>{0, 1, 2});
    CHECK(sel.newly_covered == std::vector<std::size_t>{2, 2, 2});
    CHECK(sel.uncovered_left == 0);
    CHECK(sel.selected == simulate_selection(rules, d));
  }
  SECTION("a shadowed rule is skipped") {
    std::vector<Rule> rules = {parse_rule("IF title containsAny {alpha, gamma, delta} THEN isCandidate = True"),
                               parse_rule("IF title containsAny {alpha} THEN isCandidate = True"),
                               parse_rule("IF title containsAny {beta} THEN isCandidate = False")};
    const auto sel = coverage_select(rules, idx);
    CHECK(sel.selected == std::vector<std::size_t>{0, 2});
    CHECK(sel.newly_covered == std::vector<std::size_t>{4, 2});
    CHECK(sel.selected == simulate_selection(rules, d));
  }
  SECTION("selection stops once everything is covered") {
    std::vector<Rule> rules = {parse_rule("IF title containsAny {alpha, gamma, delta} THEN isCandidate = True"),
                               parse_rule("IF title containsAny {beta} THEN isCandidate = False"),
                               parse_rule("IF title containsAny {beta} THEN isCandidate = True")};
    const auto sel = coverage_select(rules, idx);
    CHECK(sel.selected == std::vector<std::size_t>{0, 1});
    CHECK(sel.selected == simulate_selection(rules, d));
  }
  SECTION("antecedent match with the wrong label does not count") {
    std::vector<Rule> rules = {parse_rule("IF title containsAny {beta} THEN isCandidate = True")};
    CHECK(coverage_select(rules, idx).selected.empty());
  }
  SECTION("one rule covering every record") {
    const Dataset all_pos("pos", {paper("a", true, "x", 2001), paper("b", true, "y", 2002)});
    const CoverageIndex pidx(all_pos);
    std::vector<Rule> rules = {parse_rule("IF year > 1990 THEN isCandidate = True"),
                               parse_rule("IF title containsAny {x} THEN isCandidate = True")};
    const auto sel = coverage_select(rules, pidx);
    CHECK(sel.selected == std::vector<std::size_t>{0});
    CHECK(sel.newly_covered == std::vector<std::size_t>{2});
  }
}

TEST_CASE("coverage selection matches the record-level simulation") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = random_dataset(rng, 5 + rng() % 30);
    const CoverageIndex idx(d);
    std::vector<Rule> rules;
    const auto n = rng() % 12;
    for (std::size_t i = 0; i < n; ++i) rules.push_back(random_rule(rng));
    const auto sel = coverage_select(rules, idx);
    REQUIRE(sel.selected == simulate_selection(rules, d));
    REQUIRE(std::is_sorted(sel.selected.begin(), sel.selected.end()));
    // Every record is covered by a selected rule or counted as left over.
    std::size_t covered = 0;
    for (std::size_t j = 0; j < d.size(); ++j) {
      for (auto s : sel.selected) {
        if (matches_antecedent(rules[s], d[j]) && rules[s].predicted_class == d[j].label) {
          ++covered;
          break;
        }
      }
    }
    REQUIRE(covered + sel.uncovered_left == d.size());
    std::size_t total = 0;
    for (auto c : sel.newly_covered) total += c;
    REQUIRE(total == covered);
  }
}

TEST_CASE("build_classifier") {
  const auto d = six();
  const CoverageIndex idx(d);

  SECTION("single archive rule gives that rule plus the majority default") {
    const auto c = build_classifier({parse_rule("IF title containsAny {beta} THEN isCandidate = False")}, idx, Strategy::scba);
    REQUIRE(c.rules.size() == 1);
    CHECK(render(c.rules[0]) == "IF title containsAny {beta} THEN isCandidate = False");
    CHECK(c.default_class == true);
    REQUIRE(c.rules[0].measures);
    CHECK(*c.rules[0].measures == idx.measures(c.rules[0]));
    CHECK(c.newly_covered == std::vector<std::size_t>{2});
  }
  SECTION("imbalanced toward negatives defaults to False") {
    const Dataset imb("imb", {paper("a", true, "x"), paper("b", false, "y"), paper("c", false, "z")});
    const CoverageIndex iidx(imb);
    const auto c = build_classifier({parse_rule("IF title containsAny {x} THEN isCandidate = True")}, iidx, Strategy::cba);
    CHECK(c.default_class == false);
  }
  SECTION("empty archive is a build error") {
    CHECK_THROWS_AS(build_classifier({}, idx, Strategy::scba), BuildError);
  }
  SECTION("archive that covers nothing is a build error") {
    CHECK_THROWS_AS(build_classifier({parse_rule("IF title containsAny {omega} THEN isCandidate = True")}, idx, Strategy::scba),
                    BuildError);
  }
  SECTION("classifier rules are a subset in sorted order") {
    std::vector<Rule> archive = {parse_rule("IF title containsAny {alpha} THEN isCandidate = True"),
                                 parse_rule("IF title containsAny {beta} THEN isCandidate = False"),
                                 parse_rule("IF title containsAny {alpha, gamma, delta} THEN isCandidate = True"),
                                 parse_rule("IF title containsAny {gamma} THEN isCandidate = True")};
    for (auto s : {Strategy::cba, Strategy::cmar, Strategy::cpar, Strategy::scba}) {
      auto measured = archive;
      for (auto& r : measured) r.measures = idx.measures(r);
      const auto sorted = sort_rules(measured, s);
      const auto c = build_classifier(archive, idx, s);
      std::size_t pos = 0;
      for (const auto& r : c.rules) {
        while (pos < sorted.size() && !(sorted[pos] == r)) ++pos;
        REQUIRE(pos < sorted.size());
        ++pos;
      }
      for (std::size_t i = 0; i < d.size(); ++i) CHECK(predict(c, d[i]) == d[i].label);
    }
  }
}

TEST_CASE("prediction uses the first matching rule") {
  RuleClassifier c;
  c.default_class = false;
  c.rules = {parse_rule("IF title containsAny {alpha} THEN isCandidate = True"),
             parse_rule("IF year > 2010 THEN isCandidate = False"),
             parse_rule("IF year > 2020 THEN isCandidate = True"),
             parse_rule("IF title containsAny {alpha, beta} THEN isCandidate = False")};
  c.newly_covered = {0, 0, 0, 0};
  CHECK(predict(c, paper("x", false, "alpha", 2030)) == true);
  CHECK(predict(c, paper("x", false, "beta", 2030)) == false);
  CHECK(predict(c, paper("x", false, "omega", 1990)) == c.default_class);
  CHECK(predict(c, PaperRecord{}) == c.default_class);

  // Sample classifier in the shape of the published Hall listing.
  RuleClassifier hall;
  hall.default_class = false;
  hall.rules = {parse_rule("IF year > 2002 AND titleAbstract containsAll {code, predict} THEN isCandidate = True"),
                parse_rule("IF titleAbstract containsAny {fault} THEN isCandidate = True"),
                parse_rule("IF year <= 1995 THEN isCandidate = False")};
  PaperRecord rec = paper("h", false, "Predicting faulty code", 2007);
  rec.abstract = "We predict defects from source code metrics.";
  CHECK(predict(hall, rec) == true);
}

TEST_CASE("bulk prediction agrees with per-record prediction; reordering below the first match is inert") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = random_dataset(rng, 10 + rng() % 20);
    const CoverageIndex idx(d);
    RuleClassifier c;
    c.default_class = rng() % 2;
    const auto n = 1 + rng() % 6;
    for (std::size_t i = 0; i < n; ++i) {
      c.rules.push_back(random_rule(rng));
      c.newly_covered.push_back(0);
    }
    const auto bulk = predict_all(c, idx);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const bool p = predict(c, d[i]);
      REQUIRE(bulk[i] == p);
      std::size_t first = c.rules.size();
      for (std::size_t k = 0; k < c.rules.size(); ++k) {
        if (matches_antecedent(c.rules[k], d[i])) {
          first = k;
          break;
        }
      }
      if (first + 1 < c.rules.size()) {
        auto shuffled = c;
        std::shuffle(shuffled.rules.begin() + static_cast<std::ptrdiff_t>(first) + 1, shuffled.rules.end(), rng);
        REQUIRE(predict(shuffled, d[i]) == p);
      }
    }
  }
}

TEST_CASE("rule statistics") {
  RuleClassifier c;
  c.rules = {parse_rule("IF title containsAny {a} AND year > 2000 THEN isCandidate = True"),
             parse_rule("IF title containsAny {a} AND nCites > 3 AND nAuthors < 4 THEN isCandidate = True"),
             parse_rule("IF title containsAny {a} AND abstract containsAny {b} AND NOT (title containsAny {c} AND "
                        "abstract containsAny {d}) THEN isCandidate = True"),
             parse_rule("IF paperType containsAny {journal} THEN isCandidate = False")};
  c.newly_covered = {1, 1, 1, 1};
  std::vector<Rule> generated = c.rules;
  generated.push_back(parse_rule("IF year > 1 AND year < 3000 THEN isCandidate = False"));
  generated.push_back(parse_rule("IF title containsAny {z} THEN isCandidate = True"));

  const auto s = rule_stats(c, generated);
  CHECK(s.positive.classifier_rules == 3);
  CHECK(s.positive.length_mean == Catch::Approx(3.0));
  CHECK(s.positive.length_stdev == Catch::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(s.positive.bibliometric_operators == 3);
  CHECK(s.positive.generated_rules == 4);
  CHECK(s.positive.generated_bibliometric_operators == 3);
  CHECK(s.negative.classifier_rules == 1);
  CHECK(s.negative.length_mean == Catch::Approx(1.0));
  CHECK(s.negative.length_stdev == 0.0);
  CHECK(s.negative.bibliometric_operators == 0);
  CHECK(s.negative.generated_rules == 2);
  CHECK(s.negative.generated_bibliometric_operators == 2);
  CHECK(s.classifier_rules() == 4);
  CHECK(s.generated_rules() == 6);

  RuleClassifier text_only;
  text_only.rules = {parse_rule("IF title containsAny {a} THEN isCandidate = True")};
  CHECK(rule_stats(text_only, text_only.rules).bibliometric_operators() == 0);
}

TEST_CASE("classifier export and import") {
  const auto d = six();
  const CoverageIndex idx(d);
  const auto c = build_classifier({parse_rule("IF title containsAny {alpha, gamma, delta} THEN isCandidate = True"),
                                   parse_rule("IF title containsAny {beta} THEN isCandidate = False")},
                                  idx, Strategy::scba);

  CHECK(export_text(c) ==
        "# strategy: SCBA\n"
        "R1: IF title containsAny {alpha, gamma, delta} THEN isCandidate = True  [fitness 1.0000, support 0.6667, "
        "confidence 1.0000]\n"
        "R2: IF title containsAny {beta} THEN isCandidate = False  [fitness 1.0000, support 0.3333, confidence 1.0000]\n"
        "DEFAULT: isCandidate = True\n");

  const auto back = import_json(export_json(c));
  CHECK(back == c);
  CHECK(export_json(back) == export_json(c));

  const auto from_text = import_text(export_text(c));
  REQUIRE(from_text.rules.size() == c.rules.size());
  for (std::size_t i = 0; i < c.rules.size(); ++i) CHECK(from_text.rules[i] == c.rules[i]);
  CHECK(from_text.default_class == c.default_class);
  CHECK(from_text.strategy == c.strategy);

  CHECK_THROWS_AS(import_text("R1: IF nonsense\nDEFAULT: isCandidate = False\n"), LoadError);
  CHECK_THROWS_AS(import_text("R1: IF year > 1 THEN isCandidate = True\n"), LoadError);
  CHECK_THROWS_AS(import_json("{\"strategy\": \"SCBA\"}"), LoadError);
  CHECK_THROWS_AS(import_json("not json"), LoadError);

  const auto tsv = export_rules_tsv(c.rules);
  CHECK(tsv.rfind("fitness\tsupport\tconfidence\trule\n", 0) == 0);
  CHECK(tsv.find("\tIF title containsAny {beta} THEN isCandidate = False\n") != std::string::npos);
  const auto listed = import_rules_tsv(tsv);
  REQUIRE(listed.size() == c.rules.size());
  for (std::size_t i = 0; i < listed.size(); ++i) CHECK(listed[i] == c.rules[i]);
  CHECK_THROWS_AS(import_rules_tsv("fitness\tsupport\tconfidence\trule\n1\t1\t1\tIF nonsense\n"), LoadError);
}
