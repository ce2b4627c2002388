#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "irecs/common.hpp"
#include "irecs/rules.hpp"

namespace irecs {

enum class Strategy { cba, cmar, cpar, scba };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::cba: return "CBA";
    case Strategy::cmar: return "CMAR";
    case Strategy::cpar: return "CPAR";
    case Strategy::scba: return "SCBA";
  }
  return "?";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
  const auto u = to_lower(s);
  if (u == "cba") return Strategy::cba;
  if (u == "cmar") return Strategy::cmar;
  if (u == "cpar") return Strategy::cpar;
  if (u == "scba") return Strategy::scba;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Rule scores

namespace scores {

inline const RuleMeasures& measures_of(const Rule& r) {
  if (!r.measures) throw InvariantError("rule measures not set: " + render(r));
  return *r.measures;
}

/// Records the antecedent applies to.
inline double coverage(const RuleMeasures& m) { return static_cast<double>(m.matches()); }

/// Confidence with the no-support case ranked below every real value.
inline double confidence_or_floor(const RuleMeasures& m) { return m.confidence().value_or(-1.0); }

/// Laplace accuracy (agreeing + 1) / (matches + 2).
inline double laplace(const RuleMeasures& m) {
  return (static_cast<double>(m.agreeing()) + 1.0) / (static_cast<double>(m.matches()) + 2.0);
}

/// Chi-square statistic of the 2x2 table antecedent x (label == predicted class).
inline double chi_square(const RuleMeasures& m) {
  const double n = static_cast<double>(m.records);
  const double own = static_cast<double>(m.predicted_class ? m.positives : m.negatives);
  const double other = n - own;
  const double a = static_cast<double>(m.agreeing());
  const double d = static_cast<double>(m.disagreeing());
  const double b = own - a;      // predicted class, not matched
  const double c = other - d;    // other class, not matched
  const double matched = a + d, unmatched = b + c;
  if (matched == 0 || unmatched == 0 || own == 0 || other == 0) return 0.0;
  const double diff = a * c - d * b;
  return n * diff * diff / (matched * unmatched * own * other);
}

/// Class-weighted confidence: agreeing and disagreeing matches are scaled by
/// the size of their class, score = (a/Pc - d/Po) / (a/Pc + d/Po) in [-1, 1].
/// A rule matching nothing scores -2.
inline double weighted_confidence(const RuleMeasures& m) {
  const double own = static_cast<double>(m.predicted_class ? m.positives : m.negatives);
  const double other = static_cast<double>(m.predicted_class ? m.negatives : m.positives);
  const double a = own > 0 ? static_cast<double>(m.agreeing()) / own : 0.0;
  const double d = other > 0 ? static_cast<double>(m.disagreeing()) / other : 0.0;
  if (a + d == 0.0) return -2.0;
  return (a - d) / (a + d);
}

}  // namespace scores

/// Primary keys per strategy, compared lexicographically (all descending).
inline std::vector<double> strategy_keys(const Rule& r, Strategy s) {
  const auto& m = scores::measures_of(r);
  switch (s) {
    case Strategy::cba: return {scores::coverage(m), scores::confidence_or_floor(m), m.support()};
    case Strategy::cmar: return {scores::confidence_or_floor(m), scores::chi_square(m), scores::coverage(m)};
    case Strategy::cpar: return {scores::laplace(m)};
    case Strategy::scba: return {scores::weighted_confidence(m)};
  }
  return {};
}

/// Orders rules by the strategy keys, then fitness, then fewer conditions,
/// then rendered text. Fitness-first ordering is thus the base the strategy
/// refines.
inline std::vector<Rule> sort_rules(std::vector<Rule> rules, Strategy strategy) {
  struct Keyed {
    std::vector<double> keys;
    double fitness;
    std::size_t length;
    std::string text;
    std::size_t index;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(rules.size());
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const auto& m = scores::measures_of(rules[i]);
    keyed.push_back({strategy_keys(rules[i], strategy), m.fitness(), rules[i].length(), render(rules[i]), i});
  }
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    for (std::size_t k = 0; k < a.keys.size(); ++k) {
      if (a.keys[k] != b.keys[k]) return a.keys[k] > b.keys[k];
    }
    if (a.fitness != b.fitness) return a.fitness > b.fitness;
    if (a.length != b.length) return a.length < b.length;
    if (a.text != b.text) return a.text < b.text;
    return a.index < b.index;
  });
  std::vector<Rule> out;
  out.reserve(rules.size());
  for (const auto& k : keyed) out.push_back(std::move(rules[k.index]));
  return out;
}

// ---------------------------------------------------------------------------
// Coverage selection

struct Selection {
  std::vector<std::size_t> selected;       // positions in the sorted input
  std::vector<std::size_t> newly_covered;  // records first covered by each selected rule
  std::size_t uncovered_left = 0;
};

/// Walks the sorted rules keeping each one that covers (antecedent matches and
/// label agrees) at least one still-uncovered training record. Stops once
/// every record is covered.
inline Selection coverage_select(const std::vector<Rule>& sorted_rules, const CoverageIndex& train) {
  Selection out;
  Mask uncovered(train.size());
  uncovered.set();
  const Mask& positive = train.labels();
  const Mask negative = ~positive;
  for (std::size_t i = 0; i < sorted_rules.size() && uncovered.any(); ++i) {
    Mask covers = train.antecedent_mask(sorted_rules[i]);
    covers &= sorted_rules[i].predicted_class ? positive : negative;
    covers &= uncovered;
    const auto n = covers.count();
    if (n == 0) continue;
    out.selected.push_back(i);
    out.newly_covered.push_back(n);
    uncovered -= covers;
  }
  out.uncovered_left = uncovered.count();
  return out;
}

// ---------------------------------------------------------------------------
// Classifier

struct RuleClassifier {
  std::vector<Rule> rules;                 // ordered; measures from the training split
  std::vector<std::size_t> newly_covered;  // training records first covered by each rule
  bool default_class = false;
  Strategy strategy = Strategy::scba;

  friend bool operator==(const RuleClassifier& a, const RuleClassifier& b) {
    if (a.default_class != b.default_class || a.strategy != b.strategy || a.newly_covered != b.newly_covered) return false;
    if (a.rules.size() != b.rules.size()) return false;
    for (std::size_t i = 0; i < a.rules.size(); ++i) {
      if (!(a.rules[i] == b.rules[i]) || a.rules[i].measures != b.rules[i].measures) return false;
    }
    return true;
  }
};

/// Archive rules -> ordered classifier. Rule measures are recomputed on
/// `train` so the classifier only ever reflects its training split.
inline RuleClassifier build_classifier(std::vector<Rule> archive, const CoverageIndex& train, Strategy strategy) {
  if (archive.empty()) {
    throw BuildError("cannot build a classifier from an empty archive; lower the archive threshold");
  }
  if (train.size() == 0) throw BuildError("cannot build a classifier without training records");
  for (auto& r : archive) r.measures = train.measures(r);
  auto sorted = sort_rules(std::move(archive), strategy);
  const auto sel = coverage_select(sorted, train);
  if (sel.selected.empty()) {
    throw BuildError("no archive rule covers a training record; lower the archive threshold");
  }

  RuleClassifier c;
  c.strategy = strategy;
  c.default_class = train.positives() > train.negatives();
  for (std::size_t k = 0; k < sel.selected.size(); ++k) {
    c.rules.push_back(sorted[sel.selected[k]]);
    c.newly_covered.push_back(sel.newly_covered[k]);
  }
  return c;
}

inline bool predict(const RuleClassifier& c, const PaperRecord& record, const StemmedText& stems) {
  for (const auto& r : c.rules) {
    if (matches_antecedent(r, record, stems)) return r.predicted_class;
  }
  return c.default_class;
}

inline bool predict(const RuleClassifier& c, const PaperRecord& record) {
  return predict(c, record, StemmedText::of(record));
}

/// Predictions for every row of `index`, in row order.
inline std::vector<bool> predict_all(const RuleClassifier& c, const CoverageIndex& index) {
  std::vector<bool> out(index.size(), c.default_class);
  Mask open(index.size());
  open.set();
  for (const auto& r : c.rules) {
    if (open.none()) break;
    Mask hit = index.antecedent_mask(r) & open;
    for (auto i = hit.find_first(); i != Mask::npos; i = hit.find_next(i)) out[i] = r.predicted_class;
    open -= hit;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interpretability statistics

struct ClassRuleStats {
  std::size_t classifier_rules = 0;
  double length_mean = 0.0;    // conditions per classifier rule
  double length_stdev = 0.0;   // population standard deviation
  std::size_t generated_rules = 0;
  std::size_t bibliometric_operators = 0;            // in classifier rules
  std::size_t generated_bibliometric_operators = 0;  // in all generated rules

  friend bool operator==(const ClassRuleStats&, const ClassRuleStats&) = default;
};

struct RuleStats {
  ClassRuleStats positive;
  ClassRuleStats negative;

  std::size_t classifier_rules() const { return positive.classifier_rules + negative.classifier_rules; }
  std::size_t generated_rules() const { return positive.generated_rules + negative.generated_rules; }
  std::size_t bibliometric_operators() const { return positive.bibliometric_operators + negative.bibliometric_operators; }

  friend bool operator==(const RuleStats&, const RuleStats&) = default;
};

inline RuleStats rule_stats(const RuleClassifier& c, const std::vector<Rule>& generated) {
  RuleStats s;
  for (bool cls : {true, false}) {
    auto& out = cls ? s.positive : s.negative;
    std::vector<double> lengths;
    for (const auto& r : c.rules) {
      if (r.predicted_class != cls) continue;
      lengths.push_back(static_cast<double>(r.length()));
      out.bibliometric_operators += r.bibliometric_conditions();
    }
    out.classifier_rules = lengths.size();
    if (!lengths.empty()) {
      double sum = 0.0;
      for (double x : lengths) sum += x;
      out.length_mean = sum / static_cast<double>(lengths.size());
      double sq = 0.0;
      for (double x : lengths) sq += (x - out.length_mean) * (x - out.length_mean);
      out.length_stdev = std::sqrt(sq / static_cast<double>(lengths.size()));
    }
    for (const auto& r : generated) {
      if (r.predicted_class != cls) continue;
      ++out.generated_rules;
      out.generated_bibliometric_operators += r.bibliometric_conditions();
    }
  }
  return s;
}

inline nlohmann::json to_json(const ClassRuleStats& s) {
  return {{"classifier_rules", s.classifier_rules},
          {"length_mean", s.length_mean},
          {"length_stdev", s.length_stdev},
          {"generated_rules", s.generated_rules},
          {"bibliometric_operators", s.bibliometric_operators},
          {"generated_bibliometric_operators", s.generated_bibliometric_operators}};
}

inline nlohmann::json to_json(const RuleStats& s) {
  return {{"positive", to_json(s.positive)}, {"negative", to_json(s.negative)}};
}

// ---------------------------------------------------------------------------
// Export / import

namespace detail {

inline std::string fixed4(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

inline nlohmann::json measures_json(const RuleMeasures& m) {
  return {{"records", m.records},         {"positives", m.positives},     {"negatives", m.negatives},
          {"pos_matches", m.pos_matches}, {"neg_matches", m.neg_matches}};
}

inline RuleMeasures measures_from_json(const nlohmann::json& j, bool predicted_class) {
  RuleMeasures m;
  m.records = j.at("records").get<std::size_t>();
  m.positives = j.at("positives").get<std::size_t>();
  m.negatives = j.at("negatives").get<std::size_t>();
  m.pos_matches = j.at("pos_matches").get<std::size_t>();
  m.neg_matches = j.at("neg_matches").get<std::size_t>();
  m.predicted_class = predicted_class;
  if (m.positives + m.negatives != m.records || m.pos_matches > m.positives || m.neg_matches > m.negatives) {
    throw LoadError("inconsistent rule measures");
  }
  return m;
}

}  // namespace detail

/// Human-readable listing: one numbered rule per line with its training
/// measures, then the default class.
inline std::string export_text(const RuleClassifier& c) {
  std::string out = "# strategy: " + std::string(to_string(c.strategy)) + "\n";
  for (std::size_t i = 0; i < c.rules.size(); ++i) {
    const auto& r = c.rules[i];
    out += "R" + std::to_string(i + 1) + ": " + render(r);
    if (r.measures) {
      const auto conf = r.measures->confidence();
      out += "  [fitness " + detail::fixed4(r.measures->fitness()) + ", support " + detail::fixed4(r.measures->support()) +
             ", confidence " + (conf ? detail::fixed4(*conf) : std::string("NA")) + "]";
    }
    out += '\n';
  }
  out += std::string("DEFAULT: isCandidate = ") + (c.default_class ? "True" : "False") + "\n";
  return out;
}

/// Reads the text listing back. Measures are not part of the text form.
inline RuleClassifier import_text(std::string_view text) {
  RuleClassifier c;
  bool have_default = false;
  std::size_t lineno = 0, start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    start = end + 1;
    ++lineno;
    if (line.empty()) continue;
    if (line.front() == '#') {
      constexpr std::string_view tag = "# strategy:";
      if (line.substr(0, tag.size()) == tag) {
        auto s = parse_strategy(trim(line.substr(tag.size())));
        if (!s) throw LoadError("classifier line " + std::to_string(lineno) + ": unknown strategy");
        c.strategy = *s;
      }
      continue;
    }
    if (line.substr(0, 8) == "DEFAULT:") {
      const auto v = trim(line.substr(8));
      if (v == "isCandidate = True") c.default_class = true;
      else if (v == "isCandidate = False") c.default_class = false;
      else throw LoadError("classifier line " + std::to_string(lineno) + ": bad default");
      have_default = true;
      continue;
    }
    const auto colon = line.find(": ");
    if (line.front() != 'R' || colon == std::string_view::npos) {
      throw LoadError("classifier line " + std::to_string(lineno) + ": expected 'R<n>: IF ...'");
    }
    auto body = line.substr(colon + 2);
    if (auto bracket = body.rfind("  ["); bracket != std::string_view::npos) body = body.substr(0, bracket);
    try {
      c.rules.push_back(parse_rule(body));
    } catch (const LoadError& e) {
      throw LoadError("classifier line " + std::to_string(lineno) + ": " + e.what());
    }
    c.newly_covered.push_back(0);
  }
  if (!have_default) throw LoadError("classifier text has no DEFAULT line");
  return c;
}

inline nlohmann::json to_json(const RuleClassifier& c) {
  nlohmann::json rules = nlohmann::json::array();
  for (std::size_t i = 0; i < c.rules.size(); ++i) {
    const auto& r = c.rules[i];
    nlohmann::json jr = {{"rule", render(r)}, {"newly_covered", c.newly_covered.at(i)}};
    if (r.measures) {
      jr["measures"] = detail::measures_json(*r.measures);
      jr["fitness"] = r.measures->fitness();
      jr["support"] = r.measures->support();
      const auto conf = r.measures->confidence();
      jr["confidence"] = conf ? nlohmann::json(*conf) : nlohmann::json(nullptr);
    }
    rules.push_back(jr);
  }
  return {{"strategy", to_string(c.strategy)}, {"default_class", c.default_class}, {"rules", rules}};
}

inline std::string export_json(const RuleClassifier& c) { return to_json(c).dump(2) + "\n"; }

inline RuleClassifier import_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    RuleClassifier c;
    auto s = parse_strategy(j.at("strategy").get<std::string>());
    if (!s) throw LoadError("unknown strategy");
    c.strategy = *s;
    c.default_class = j.at("default_class").get<bool>();
    for (const auto& jr : j.at("rules")) {
      Rule r = parse_rule(jr.at("rule").get<std::string>());
      if (jr.contains("measures")) r.measures = detail::measures_from_json(jr.at("measures"), r.predicted_class);
      c.rules.push_back(std::move(r));
      c.newly_covered.push_back(jr.value("newly_covered", std::size_t{0}));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("classifier json: ") + e.what());
  }
}

/// Archive listing: fitness, support, confidence and rendered rule per line.
inline std::string export_rules_tsv(const std::vector<Rule>& rules) {
  std::string out = "fitness\tsupport\tconfidence\trule\n";
  for (const auto& r : rules) {
    const auto& m = scores::measures_of(r);
    const auto conf = m.confidence();
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.17g\t%.17g\t", m.fitness(), m.support());
    out += buf;
    if (conf) {
      std::snprintf(buf, sizeof buf, "%.17g", *conf);
      out += buf;
    } else {
      out += "NA";
    }
    out += '\t' + render(r) + '\n';
  }
  return out;
}

/// Rules of an archive listing. Measures are not restored.
inline std::vector<Rule> import_rules_tsv(std::string_view text) {
  std::vector<Rule> rules;
  std::size_t lineno = 0, start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    if (lineno == 1 || trim(line).empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string_view::npos) throw LoadError("archive line " + std::to_string(lineno) + ": expected 4 columns");
    try {
      rules.push_back(parse_rule(line.substr(tab + 1)));
    } catch (const LoadError& e) {
      throw LoadError("archive line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rules;
}

}  // namespace irecs
