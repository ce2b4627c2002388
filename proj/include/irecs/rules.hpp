#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <boost/dynamic_bitset.hpp>

#include "irecs/common.hpp"
#include "irecs/corpus.hpp"
#include "irecs/text.hpp"

namespace irecs {

enum class Field { nCites, nAuthors, year, title, abstract, titleAbstract, paperType };
enum class Comparator { gt, lt, ge, le, containsAll, containsAny, equals, notEquals };

inline constexpr Field kAllFields[] = {Field::nCites,   Field::nAuthors,      Field::year,
                                       Field::title,    Field::abstract,      Field::titleAbstract,
                                       Field::paperType};

inline std::string_view to_string(Field f) {
  switch (f) {
    case Field::nCites: return "nCites";
    case Field::nAuthors: return "nAuthors";
    case Field::year: return "year";
    case Field::title: return "title";
    case Field::abstract: return "abstract";
    case Field::titleAbstract: return "titleAbstract";
    case Field::paperType: return "paperType";
  }
  return "?";
}

inline std::optional<Field> parse_field(std::string_view s) {
  for (auto f : kAllFields) {
    if (to_string(f) == s) return f;
  }
  return std::nullopt;
}

inline std::string_view to_string(Comparator c) {
  switch (c) {
    case Comparator::gt: return ">";
    case Comparator::lt: return "<";
    case Comparator::ge: return ">=";
    case Comparator::le: return "<=";
    case Comparator::containsAll: return "containsAll";
    case Comparator::containsAny: return "containsAny";
    case Comparator::equals: return "=";
    case Comparator::notEquals: return "!=";
  }
  return "?";
}

inline std::optional<Comparator> parse_comparator(std::string_view s) {
  if (s == ">") return Comparator::gt;
  if (s == "<") return Comparator::lt;
  if (s == ">=") return Comparator::ge;
  if (s == "<=") return Comparator::le;
  if (s == "containsAll") return Comparator::containsAll;
  if (s == "containsAny") return Comparator::containsAny;
  if (s == "=" || s == "equals") return Comparator::equals;
  if (s == "!=" || s == "notEquals") return Comparator::notEquals;
  return std::nullopt;
}

inline bool is_numeric(Field f) { return f == Field::nCites || f == Field::nAuthors || f == Field::year; }
inline bool is_text(Field f) { return f == Field::title || f == Field::abstract || f == Field::titleAbstract; }
/// Conditions on these fields count as bibliometric operators.
inline bool is_bibliometric_operator(Field f) { return is_numeric(f); }

/// field comparator value. Numeric fields hold an integer; text fields a set
/// of stems; paperType a set of categories.
struct Condition {
  Field field = Field::title;
  Comparator comparator = Comparator::containsAny;
  std::variant<std::int64_t, std::vector<std::string>> value;

  std::int64_t number() const { return std::get<std::int64_t>(value); }
  const std::vector<std::string>& items() const { return std::get<std::vector<std::string>>(value); }

  friend bool operator==(const Condition&, const Condition&) = default;
};

inline void validate(const Condition& c) {
  const bool numeric_cmp = c.comparator == Comparator::gt || c.comparator == Comparator::lt ||
                           c.comparator == Comparator::ge || c.comparator == Comparator::le;
  const bool contains_cmp = c.comparator == Comparator::containsAll || c.comparator == Comparator::containsAny;
  const bool eq_cmp = c.comparator == Comparator::equals || c.comparator == Comparator::notEquals;
  const std::string where = std::string(to_string(c.field)) + " " + std::string(to_string(c.comparator));
  if (is_numeric(c.field)) {
    if (!numeric_cmp) throw ParameterError("comparator not valid for numeric field: " + where);
    if (!std::holds_alternative<std::int64_t>(c.value)) throw ParameterError("numeric value expected: " + where);
    return;
  }
  if (is_text(c.field) && !contains_cmp) throw ParameterError("comparator not valid for text field: " + where);
  if (c.field == Field::paperType && !(contains_cmp || eq_cmp)) {
    throw ParameterError("comparator not valid for paperType: " + where);
  }
  if (!std::holds_alternative<std::vector<std::string>>(c.value) || c.items().empty()) {
    throw ParameterError("non-empty value set expected: " + where);
  }
  if (eq_cmp && c.items().size() != 1) throw ParameterError("equals/notEquals take one category: " + where);
}

/// A conjunct of the antecedent. Plain clauses hold one condition; a negated
/// clause is NOT(c1 AND c2 ...), which the grammar produces from `not <cmp>`.
struct Clause {
  bool negated = false;
  std::vector<Condition> conditions;

  friend bool operator==(const Clause&, const Clause&) = default;
};

/// Counts gathered when a rule is evaluated on a dataset.
struct RuleMeasures {
  std::size_t records = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t pos_matches = 0;  // positives matching the antecedent
  std::size_t neg_matches = 0;  // negatives matching the antecedent
  bool predicted_class = true;

  std::size_t matches() const { return pos_matches + neg_matches; }
  std::size_t agreeing() const { return predicted_class ? pos_matches : neg_matches; }
  std::size_t disagreeing() const { return predicted_class ? neg_matches : pos_matches; }

  double support() const {
    if (records == 0) throw ParameterError("support: empty dataset");
    return static_cast<double>(agreeing()) / static_cast<double>(records);
  }
  /// nullopt when the antecedent matches nothing.
  std::optional<double> confidence() const {
    if (matches() == 0) return std::nullopt;
    return static_cast<double>(agreeing()) / static_cast<double>(matches());
  }
  double fitness() const {
    if (positives == 0 || negatives == 0) throw ParameterError("fitness: dataset must contain both classes");
    const double pos_cov = static_cast<double>(pos_matches) / static_cast<double>(positives);
    const double neg_cov = static_cast<double>(neg_matches) / static_cast<double>(negatives);
    return predicted_class ? pos_cov - neg_cov : neg_cov - pos_cov;
  }

  friend bool operator==(const RuleMeasures&, const RuleMeasures&) = default;
};

/// Class association rule: conjunction of clauses -> isCandidate = predicted_class.
struct Rule {
  std::vector<Clause> clauses;
  bool predicted_class = true;
  std::optional<RuleMeasures> measures;  // cached on the dataset it was last evaluated on

  /// Number of conditions in the antecedent.
  std::size_t length() const {
    std::size_t n = 0;
    for (const auto& c : clauses) n += c.conditions.size();
    return n;
  }

  std::size_t bibliometric_conditions() const {
    std::size_t n = 0;
    for (const auto& c : clauses) {
      for (const auto& cond : c.conditions) n += is_bibliometric_operator(cond.field) ? 1 : 0;
    }
    return n;
  }

  bool references(Field f) const {
    for (const auto& c : clauses) {
      for (const auto& cond : c.conditions) {
        if (cond.field == f) return true;
      }
    }
    return false;
  }

  /// Structural equality; cached measures are ignored.
  friend bool operator==(const Rule& a, const Rule& b) {
    return a.predicted_class == b.predicted_class && a.clauses == b.clauses;
  }
};

inline void validate(const Rule& r) {
  if (r.clauses.empty()) throw ParameterError("rule has an empty antecedent");
  for (const auto& c : r.clauses) {
    if (c.conditions.empty()) throw ParameterError("rule has an empty clause");
    for (const auto& cond : c.conditions) validate(cond);
  }
}

// ---------------------------------------------------------------------------
// Rendering and parsing

inline std::string render(const Condition& c) {
  std::string out(to_string(c.field));
  out += ' ';
  out += to_string(c.comparator);
  out += ' ';
  if (std::holds_alternative<std::int64_t>(c.value)) {
    out += std::to_string(c.number());
  } else if (c.comparator == Comparator::equals || c.comparator == Comparator::notEquals) {
    out += c.items().front();
  } else {
    out += '{';
    for (std::size_t i = 0; i < c.items().size(); ++i) {
      if (i) out += ", ";
      out += c.items()[i];
    }
    out += '}';
  }
  return out;
}

inline std::string render(const Rule& rule) {
  std::string out = "IF ";
  for (std::size_t i = 0; i < rule.clauses.size(); ++i) {
    if (i) out += " AND ";
    const auto& clause = rule.clauses[i];
    if (clause.negated) out += "NOT (";
    for (std::size_t j = 0; j < clause.conditions.size(); ++j) {
      if (j) out += " AND ";
      out += render(clause.conditions[j]);
    }
    if (clause.negated) out += ")";
  }
  out += rule.predicted_class ? " THEN isCandidate = True" : " THEN isCandidate = False";
  return out;
}

namespace detail {

class RuleTextParser {
 public:
  explicit RuleTextParser(std::string_view text) : s_(text) {}

  Rule parse() {
    Rule rule;
    expect_word("IF");
    rule.clauses.push_back(clause());
    while (true) {
      auto w = peek_word();
      if (w == "AND") {
        next_word();
        rule.clauses.push_back(clause());
      } else if (w == "THEN") {
        next_word();
        break;
      } else {
        fail("expected AND or THEN");
      }
    }
    expect_word("isCandidate");
    expect_word("=");
    auto cls = next_word();
    if (cls == "True") rule.predicted_class = true;
    else if (cls == "False") rule.predicted_class = false;
    else fail("expected True or False");
    skip_ws();
    if (pos_ != s_.size()) fail("trailing text");
    try {
      validate(rule);
    } catch (const ParameterError& e) {
      fail(e.what());
    }
    return rule;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw LoadError("rule text, column " + std::to_string(pos_ + 1) + ": " + what + " in '" +
                    std::string(s_) + "'");
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  static bool is_delim(char c) {
    return std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')' || c == '{' || c == '}' || c == ',';
  }

  std::string_view peek_word() {
    skip_ws();
    auto p = pos_;
    if (p < s_.size() && (s_[p] == '(' || s_[p] == ')')) return s_.substr(p, 1);
    while (p < s_.size() && !is_delim(s_[p])) ++p;
    return s_.substr(pos_, p - pos_);
  }

  std::string_view next_word() {
    auto w = peek_word();
    pos_ += w.size();
    return w;
  }

  void expect_word(std::string_view w) {
    if (next_word() != w) fail("expected '" + std::string(w) + "'");
  }

  Clause clause() {
    Clause c;
    if (peek_word() == "NOT") {
      next_word();
      expect_word("(");
      c.negated = true;
      c.conditions.push_back(condition());
      while (peek_word() == "AND") {
        next_word();
        c.conditions.push_back(condition());
      }
      expect_word(")");
    } else {
      c.conditions.push_back(condition());
    }
    return c;
  }

  Condition condition() {
    Condition c;
    auto fw = next_word();
    auto field = parse_field(fw);
    if (!field) fail("unknown field '" + std::string(fw) + "'");
    c.field = *field;
    auto cw = next_word();
    auto cmp = parse_comparator(cw);
    if (!cmp) fail("unknown comparator '" + std::string(cw) + "'");
    c.comparator = *cmp;
    skip_ws();
    if (is_numeric(c.field)) {
      auto num = std::string(next_word());
      try {
        std::size_t used = 0;
        c.value = static_cast<std::int64_t>(std::stoll(num, &used));
        if (used != num.size()) fail("bad number '" + num + "'");
      } catch (const std::logic_error&) {
        fail("bad number '" + num + "'");
      }
    } else if (pos_ < s_.size() && s_[pos_] == '{') {
      ++pos_;
      auto close = s_.find('}', pos_);
      if (close == std::string_view::npos) fail("unterminated value set");
      std::vector<std::string> items;
      auto body = s_.substr(pos_, close - pos_);
      std::size_t start = 0;
      while (true) {
        auto comma = body.find(',', start);
        auto item = trim(body.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (item.empty()) fail("empty item in value set");
        items.emplace_back(item);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
      pos_ = close + 1;
      c.value = std::move(items);
    } else {
      auto w = next_word();
      if (w.empty()) fail("missing value");
      c.value = std::vector<std::string>{std::string(w)};
    }
    return c;
  }
};

}  // namespace detail

/// Inverse of render(Rule).
inline Rule parse_rule(std::string_view text) { return detail::RuleTextParser(text).parse(); }

// ---------------------------------------------------------------------------
// Matching

/// A record with its title/abstract already reduced to sorted stem sets.
struct StemmedText {
  std::vector<std::string> title;
  std::vector<std::string> abstract;
  std::vector<std::string> both;

  static StemmedText of(const PaperRecord& r) {
    StemmedText s;
    s.title = stem_set(r.title);
    s.abstract = stem_set(r.abstract);
    std::set_union(s.title.begin(), s.title.end(), s.abstract.begin(), s.abstract.end(),
                   std::back_inserter(s.both));
    return s;
  }
};

namespace detail {

inline bool has_stem(const std::vector<std::string>& sorted, const std::string& value) {
  const auto key = to_lower(value);
  return std::binary_search(sorted.begin(), sorted.end(), key);
}

inline std::optional<std::int64_t> numeric_field(const PaperRecord& r, Field f) {
  switch (f) {
    case Field::nCites: return r.n_cites;
    case Field::nAuthors: return r.n_authors;
    case Field::year: return r.year;
    default: return std::nullopt;
  }
}

inline bool compare(std::int64_t lhs, Comparator c, std::int64_t rhs) {
  switch (c) {
    case Comparator::gt: return lhs > rhs;
    case Comparator::lt: return lhs < rhs;
    case Comparator::ge: return lhs >= rhs;
    case Comparator::le: return lhs <= rhs;
    default: return false;
  }
}

inline bool category_test(PaperType t, const Condition& c) {
  const auto name = to_string(t);
  const auto& items = c.items();
  auto eq = [&](const std::string& v) { return to_lower(v) == name; };
  switch (c.comparator) {
    case Comparator::containsAny:
    case Comparator::equals: return std::any_of(items.begin(), items.end(), eq);
    case Comparator::containsAll: return std::all_of(items.begin(), items.end(), eq);
    case Comparator::notEquals: return !std::any_of(items.begin(), items.end(), eq);
    default: return false;
  }
}

}  // namespace detail

/// nullopt when the record lacks the field the condition reads.
inline std::optional<bool> evaluate(const Condition& c, const PaperRecord& r, const StemmedText& stems) {
  if (is_numeric(c.field)) {
    auto v = detail::numeric_field(r, c.field);
    if (!v) return std::nullopt;
    return detail::compare(*v, c.comparator, c.number());
  }
  if (c.field == Field::paperType) {
    if (!r.paper_type) return std::nullopt;
    return detail::category_test(*r.paper_type, c);
  }
  const auto& set = c.field == Field::title ? stems.title : c.field == Field::abstract ? stems.abstract : stems.both;
  const auto& items = c.items();
  auto in = [&](const std::string& v) { return detail::has_stem(set, v); };
  if (c.comparator == Comparator::containsAll) return std::all_of(items.begin(), items.end(), in);
  return std::any_of(items.begin(), items.end(), in);
}

/// Missing fields never satisfy a condition, negated or not.
inline bool holds(const Clause& clause, const PaperRecord& r, const StemmedText& stems) {
  if (!clause.negated) {
    return std::all_of(clause.conditions.begin(), clause.conditions.end(), [&](const Condition& c) {
      return evaluate(c, r, stems).value_or(false);
    });
  }
  return std::any_of(clause.conditions.begin(), clause.conditions.end(), [&](const Condition& c) {
    auto v = evaluate(c, r, stems);
    return v.has_value() && !*v;
  });
}

inline bool matches_antecedent(const Rule& rule, const PaperRecord& record, const StemmedText& stems) {
  return std::all_of(rule.clauses.begin(), rule.clauses.end(),
                     [&](const Clause& c) { return holds(c, record, stems); });
}

inline bool matches_antecedent(const Rule& rule, const PaperRecord& record) {
  return matches_antecedent(rule, record, StemmedText::of(record));
}

// ---------------------------------------------------------------------------
// Bitset evaluation over a set of records

using Mask = boost::dynamic_bitset<std::uint64_t>;

/// Stems for every record of a dataset, computed once and shared by folds.
using StemCache = std::vector<StemmedText>;

inline StemCache stem_cache(const Dataset& d) {
  StemCache out;
  out.reserve(d.size());
  for (const auto& r : d.records()) out.push_back(StemmedText::of(r));
  return out;
}

/// Inverted index over a subset of a dataset. Rules are evaluated as bitwise
/// operations over per-stem posting masks, so one evaluation costs
/// O(conditions * records / 64).
class CoverageIndex {
 public:
  CoverageIndex(const Dataset& dataset, const StemCache& stems, std::vector<std::size_t> rows)
      : dataset_(&dataset), rows_(std::move(rows)) {
    if (stems.size() != dataset.size()) throw ParameterError("CoverageIndex: stem cache size mismatch");
    const std::size_t n = rows_.size();
    labels_.resize(n);
    for (auto f : {Field::nCites, Field::nAuthors, Field::year}) {
      auto& col = numeric_[slot(f)];
      col.assign(n, 0);
      present_[slot(f)].resize(n);
    }
    present_[slot(Field::paperType)].resize(n);
    paper_type_.assign(n, PaperType::other);

    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = dataset[rows_[i]];
      const auto& s = stems[rows_[i]];
      if (r.label) {
        labels_.set(i);
        ++positives_;
      }
      for (auto f : {Field::nCites, Field::nAuthors, Field::year}) {
        if (auto v = detail::numeric_field(r, f)) {
          numeric_[slot(f)][i] = *v;
          present_[slot(f)].set(i);
        }
      }
      if (r.paper_type) {
        paper_type_[i] = *r.paper_type;
        present_[slot(Field::paperType)].set(i);
      }
      post(postings_title_, s.title, i);
      post(postings_abstract_, s.abstract, i);
      post(postings_both_, s.both, i);
    }
  }

  explicit CoverageIndex(const Dataset& dataset)
      : CoverageIndex(dataset, stem_cache(dataset), all_rows(dataset.size())) {}

  std::size_t size() const { return rows_.size(); }
  std::size_t positives() const { return positives_; }
  std::size_t negatives() const { return rows_.size() - positives_; }
  const Mask& labels() const { return labels_; }
  const std::vector<std::size_t>& rows() const { return rows_; }
  const Dataset& dataset() const { return *dataset_; }

  Mask antecedent_mask(const Rule& rule) const {
    Mask m(rows_.size());
    m.set();
    for (const auto& clause : rule.clauses) {
      m &= clause_mask(clause);
      if (m.none()) break;
    }
    return m;
  }

  RuleMeasures measures(const Rule& rule) const {
    const Mask m = antecedent_mask(rule);
    RuleMeasures out;
    out.records = rows_.size();
    out.positives = positives_;
    out.negatives = rows_.size() - positives_;
    out.pos_matches = (m & labels_).count();
    out.neg_matches = m.count() - out.pos_matches;
    out.predicted_class = rule.predicted_class;
    return out;
  }

 private:
  const Dataset* dataset_;
  std::vector<std::size_t> rows_;
  Mask labels_;
  std::size_t positives_ = 0;
  std::vector<std::int64_t> numeric_[4];
  Mask present_[4];
  std::vector<PaperType> paper_type_;
  std::unordered_map<std::string, Mask> postings_title_, postings_abstract_, postings_both_;

  static std::size_t slot(Field f) {
    switch (f) {
      case Field::nCites: return 0;
      case Field::nAuthors: return 1;
      case Field::year: return 2;
      default: return 3;
    }
  }

  static std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
  }

  void post(std::unordered_map<std::string, Mask>& postings, const std::vector<std::string>& stems,
            std::size_t i) {
    for (const auto& s : stems) {
      auto [it, inserted] = postings.try_emplace(s);
      if (inserted) it->second.resize(rows_.size());
      it->second.set(i);
    }
  }

  const std::unordered_map<std::string, Mask>& postings_for(Field f) const {
    return f == Field::title ? postings_title_ : f == Field::abstract ? postings_abstract_ : postings_both_;
  }

  // Records where the field is present, and records where the condition holds.
  std::pair<Mask, Mask> condition_masks(const Condition& c) const {
    const std::size_t n = rows_.size();
    if (is_numeric(c.field)) {
      const auto& col = numeric_[slot(c.field)];
      const auto& present = present_[slot(c.field)];
      Mask hit(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (present[i] && detail::compare(col[i], c.comparator, c.number())) hit.set(i);
      }
      return {present, hit};
    }
    if (c.field == Field::paperType) {
      const auto& present = present_[slot(Field::paperType)];
      Mask hit(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (present[i] && detail::category_test(paper_type_[i], c)) hit.set(i);
      }
      return {present, hit};
    }
    Mask all(n);
    all.set();
    const auto& postings = postings_for(c.field);
    const bool any = c.comparator == Comparator::containsAny;
    Mask hit(n);
    if (!any) hit.set();
    for (const auto& v : c.items()) {
      auto it = postings.find(to_lower(v));
      if (any) {
        if (it != postings.end()) hit |= it->second;
      } else {
        if (it == postings.end()) {
          hit.reset();
          break;
        }
        hit &= it->second;
      }
    }
    return {all, hit};
  }

  Mask clause_mask(const Clause& clause) const {
    const std::size_t n = rows_.size();
    if (!clause.negated) {
      Mask m(n);
      m.set();
      for (const auto& c : clause.conditions) m &= condition_masks(c).second;
      return m;
    }
    Mask m(n);
    for (const auto& c : clause.conditions) {
      auto [present, hit] = condition_masks(c);
      m |= present - hit;
    }
    return m;
  }
};

// Single-rule measure functions. Each builds an index over the dataset; use a
// CoverageIndex directly when evaluating many rules.

inline double support(const Rule& rule, const Dataset& dataset) {
  if (dataset.empty()) throw ParameterError("support: empty dataset");
  return CoverageIndex(dataset).measures(rule).support();
}

inline std::optional<double> confidence(const Rule& rule, const Dataset& dataset) {
  if (dataset.empty()) throw ParameterError("confidence: empty dataset");
  return CoverageIndex(dataset).measures(rule).confidence();
}

inline double fitness(const Rule& rule, const Dataset& dataset) {
  return CoverageIndex(dataset).measures(rule).fitness();
}

}  // namespace irecs
