#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "irecs/common.hpp"
#include "irecs/corpus.hpp"
#include "irecs/rules.hpp"
#include "irecs/text.hpp"

namespace irecs {

/// Grammar failures carry a kind so callers and tests can tell them apart.
class GrammarParseError : public GrammarError {
 public:
  enum class Kind { syntax, undefined_symbol, missing_terminal_config, not_disjoint, bad_terminal_config, underivable };

  GrammarParseError(Kind kind, const std::string& msg) : GrammarError(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

enum class ValueKind { int_range, categorical, word_set };

/// How a value terminal (e.g. nAuthorsValue) is bound to a concrete value.
struct TerminalConfig {
  std::string name;
  std::string code;
  ValueKind kind = ValueKind::int_range;
  // int_range; unset bounds are filled from the training data by bind_terminals
  std::optional<std::int64_t> min_value;
  std::optional<std::int64_t> max_value;
  // categorical
  std::vector<std::string> categories;
  // word_set
  std::size_t min_words = 1;
  std::size_t max_words = 3;
  std::string source = "relevant";
  std::vector<std::string> words;  // pool, filled by bind_terminals
  // data field the value is compared against, if any
  std::optional<Field> field;

  friend bool operator==(const TerminalConfig&, const TerminalConfig&) = default;
};

using Alternative = std::vector<std::string>;

/// Context-free grammar {S, N, T, P} plus terminal value configuration.
/// Non-terminal names keep their angle brackets ("<rule>").
struct GrammarSpec {
  std::string root;
  std::set<std::string> non_terminals;
  std::set<std::string> terminals;
  std::map<std::string, std::vector<Alternative>> productions;
  std::map<std::string, TerminalConfig> terminal_configs;
  /// Fewest production applications needed to fully derive each non-terminal.
  std::map<std::string, std::size_t> min_derivations;

  bool is_non_terminal(const std::string& s) const { return non_terminals.contains(s); }
  bool is_terminal(const std::string& s) const { return terminals.contains(s); }
  const TerminalConfig* config_for(const std::string& terminal) const {
    auto it = terminal_configs.find(terminal);
    return it == terminal_configs.end() ? nullptr : &it->second;
  }
  const std::vector<Alternative>& alternatives(const std::string& nt) const {
    auto it = productions.find(nt);
    if (it == productions.end()) throw GrammarError("no productions for " + nt);
    return it->second;
  }
  std::size_t min_cost(const std::string& nt) const {
    auto it = min_derivations.find(nt);
    return it == min_derivations.end() ? std::numeric_limits<std::size_t>::max() : it->second;
  }

  bool operator==(const GrammarSpec&) const = default;
};

namespace detail {

inline bool looks_non_terminal(std::string_view tok) {
  if (tok.size() < 3 || tok.front() != '<' || tok.back() != '>') return false;
  for (char c : tok.substr(1, tok.size() - 2)) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

constexpr std::size_t kInfinite = std::numeric_limits<std::size_t>::max();

/// Least-fixpoint computation of min_derivations; non-productive symbols stay
/// absent from the map.
inline void compute_min_derivations(GrammarSpec& g) {
  g.min_derivations.clear();
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& [nt, alts] : g.productions) {
      std::size_t best = g.min_cost(nt);
      for (const auto& alt : alts) {
        std::size_t cost = 1;
        for (const auto& s : alt) {
          if (!g.is_non_terminal(s)) continue;
          const auto c = g.min_cost(s);
          if (c == kInfinite) {
            cost = kInfinite;
            break;
          }
          cost += c;
        }
        best = std::min(best, cost);
      }
      if (best != kInfinite && best < g.min_cost(nt)) {
        g.min_derivations[nt] = best;
        changed = true;
      }
    }
  }
}

/// Field a terminal symbol refers to: the field name itself ("nCites") or its
/// value terminal ("nCitesValue").
inline std::optional<Field> field_of_terminal(const GrammarSpec& g, const std::string& t) {
  if (auto* cfg = g.config_for(t); cfg && cfg->field) return cfg->field;
  if (auto f = parse_field(t)) return f;
  if (ends_with(t, "Value")) return parse_field(std::string_view(t).substr(0, t.size() - 5));
  return std::nullopt;
}

struct Token {
  std::string text;
  std::size_t line;
};

inline std::vector<Token> lex_grammar(std::string_view text) {
  std::vector<Token> out;
  std::size_t line = 1;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back({cur, line});
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '#') {
      flush();
      while (i < text.size() && text[i] != '\n') ++i;
      --i;
      continue;
    }
    if (c == '\n') {
      flush();
      ++line;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (c == '{' || c == '}' || c == ',' || c == '|') {
      flush();
      out.push_back({std::string(1, c), line});
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

}  // namespace detail

/// Parses BNF grammar text and the XML terminal configuration.
///
/// Grammar text is either a bare list of productions or the tuple form
///
///     S = <rule>
///     N = { <rule>, <antc>, ... }
///     T = { not, and, ... }
///     P = { <rule> ::= <antc> <consq>   <antc> ::= <cmp> | not <cmp> ... }
///
/// Non-terminals are written in angle brackets; alternatives are separated by
/// '|'; '#' starts a comment. Without S the first left-hand side is the root;
/// without N/T declarations the sets are inferred from the productions.
inline GrammarSpec parse_grammar_text(std::string_view grammar_text) {
  using Kind = GrammarParseError::Kind;
  const auto toks = detail::lex_grammar(grammar_text);
  auto err = [](Kind k, std::size_t line, const std::string& msg) {
    return GrammarParseError(k, "grammar line " + std::to_string(line) + ": " + msg);
  };

  GrammarSpec g;
  std::optional<std::set<std::string>> declared_n, declared_t;
  std::map<std::string, std::size_t> first_use;  // symbol -> line for diagnostics
  std::vector<std::string> lhs_order;

  auto read_set = [&](std::size_t& i) {
    std::set<std::string> s;
    if (i >= toks.size() || toks[i].text != "{") throw err(Kind::syntax, toks[i - 1].line, "expected '{'");
    ++i;
    while (i < toks.size() && toks[i].text != "}") {
      if (toks[i].text != ",") s.insert(toks[i].text);
      ++i;
    }
    if (i >= toks.size()) throw err(Kind::syntax, toks.back().line, "unterminated set");
    ++i;
    return s;
  };

  auto is_lhs_at = [&](std::size_t i) {
    return i + 1 < toks.size() && detail::looks_non_terminal(toks[i].text) && toks[i + 1].text == "::=";
  };

  std::size_t i = 0;
  while (i < toks.size()) {
    const auto& t = toks[i].text;
    const bool is_decl = i + 1 < toks.size() && toks[i + 1].text == "=";
    if (is_decl && t == "S") {
      if (i + 2 >= toks.size()) throw err(Kind::syntax, toks[i].line, "missing start symbol");
      g.root = toks[i + 2].text;
      i += 3;
    } else if (is_decl && t == "N") {
      i += 2;
      declared_n = read_set(i);
    } else if (is_decl && t == "T") {
      i += 2;
      declared_t = read_set(i);
    } else if (is_decl && t == "P") {
      i += 2;
      if (i >= toks.size() || toks[i].text != "{") throw err(Kind::syntax, toks[i - 1].line, "expected '{'");
      ++i;
    } else if (t == "}") {
      ++i;  // closes P
    } else if (is_lhs_at(i)) {
      const std::string lhs = t;
      const std::size_t lhs_line = toks[i].line;
      if (g.productions.contains(lhs)) throw err(Kind::syntax, lhs_line, "duplicate production for " + lhs);
      lhs_order.push_back(lhs);
      first_use.emplace(lhs, lhs_line);
      i += 2;
      std::vector<Alternative> alts(1);
      while (i < toks.size() && !is_lhs_at(i) && toks[i].text != "}") {
        if (toks[i].text == "|") {
          alts.emplace_back();
        } else if (toks[i].text == "::=" || toks[i].text == "{" || toks[i].text == ",") {
          throw err(Kind::syntax, toks[i].line, "unexpected '" + toks[i].text + "'");
        } else {
          alts.back().push_back(toks[i].text);
          first_use.emplace(toks[i].text, toks[i].line);
        }
        ++i;
      }
      for (const auto& a : alts) {
        if (a.empty()) throw err(Kind::syntax, lhs_line, "empty alternative for " + lhs);
      }
      g.productions.emplace(lhs, std::move(alts));
    } else {
      throw err(Kind::syntax, toks[i].line, "unexpected token '" + t + "'");
    }
  }
  if (g.productions.empty()) throw GrammarParseError(Kind::syntax, "grammar has no productions");

  if (declared_n && declared_t) {
    for (const auto& s : *declared_n) {
      if (declared_t->contains(s)) {
        throw GrammarParseError(Kind::not_disjoint, "symbol " + s + " declared both non-terminal and terminal");
      }
    }
  }
  for (const auto& lhs : lhs_order) {
    if (declared_t && declared_t->contains(lhs)) {
      throw err(Kind::not_disjoint, first_use[lhs], lhs + " is a declared terminal but has productions");
    }
    if (declared_n && !declared_n->contains(lhs)) {
      throw err(Kind::undefined_symbol, first_use[lhs], lhs + " has productions but is not declared in N");
    }
  }

  g.non_terminals = declared_n ? *declared_n : std::set<std::string>(lhs_order.begin(), lhs_order.end());
  for (const auto& nt : g.non_terminals) {
    if (!g.productions.contains(nt)) {
      const auto line = first_use.contains(nt) ? first_use[nt] : 0;
      throw err(Kind::undefined_symbol, line, "symbol " + nt + " has no production");
    }
  }

  for (const auto& [lhs, alts] : g.productions) {
    for (const auto& alt : alts) {
      for (const auto& s : alt) {
        if (detail::looks_non_terminal(s) && !g.non_terminals.contains(s)) {
          if (declared_t && declared_t->contains(s)) continue;
          throw err(Kind::undefined_symbol, first_use[s], "symbol " + s + " has no production");
        }
        if (!g.non_terminals.contains(s)) {
          if (declared_t && !declared_t->contains(s)) {
            throw err(Kind::undefined_symbol, first_use[s], "symbol " + s + " is not a declared terminal");
          }
          if (!declared_t) g.terminals.insert(s);
        }
      }
    }
  }
  if (declared_t) g.terminals = *declared_t;
  for (const auto& s : g.terminals) {
    if (g.non_terminals.contains(s)) {
      throw GrammarParseError(Kind::not_disjoint, "symbol " + s + " is both terminal and non-terminal");
    }
  }

  if (g.root.empty()) g.root = lhs_order.front();
  if (!g.non_terminals.contains(g.root)) {
    throw GrammarParseError(Kind::undefined_symbol, "start symbol " + g.root + " is not a non-terminal");
  }
  detail::compute_min_derivations(g);
  if (g.min_cost(g.root) == detail::kInfinite) {
    throw GrammarParseError(Kind::underivable, "start symbol " + g.root + " cannot derive a terminal string");
  }
  return g;
}

/// Reads <terminal name=".." code=".." type=".." .../> elements. Supported
/// types: int (minValue/maxValue, both optional), categorical (values="a,b"),
/// wordset (minWords/maxWords, source). An optional field attribute names the
/// record field compared against.
inline std::map<std::string, TerminalConfig> parse_terminal_config(std::string_view xml_text) {
  using Kind = GrammarParseError::Kind;
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in{std::string(xml_text)};
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw GrammarParseError(Kind::bad_terminal_config, std::string("terminal config XML: ") + e.what());
  }

  std::map<std::string, TerminalConfig> out;
  std::function<void(const pt::ptree&)> visit = [&](const pt::ptree& node) {
    for (const auto& [tag, child] : node) {
      if (tag == "terminal") {
        const auto attrs = child.get_child_optional("<xmlattr>");
        if (!attrs) throw GrammarParseError(Kind::bad_terminal_config, "terminal element without attributes");
        auto attr = [&](const char* key) { return attrs->get_optional<std::string>(key); };
        auto int_attr = [&](const char* key) -> std::optional<std::int64_t> {
          auto v = attr(key);
          if (!v || trim(*v).empty()) return std::nullopt;
          try {
            std::size_t used = 0;
            auto n = std::stoll(*v, &used);
            if (used != v->size()) throw std::invalid_argument(*v);
            return n;
          } catch (const std::exception&) {
            throw GrammarParseError(Kind::bad_terminal_config, std::string("bad integer for ") + key + ": " + *v);
          }
        };
        TerminalConfig cfg;
        auto name = attr("name");
        if (!name || name->empty()) throw GrammarParseError(Kind::bad_terminal_config, "terminal without name");
        cfg.name = *name;
        cfg.code = attr("code").value_or(cfg.name);
        const auto type = to_lower(attr("type").value_or(""));
        if (type == "int" || type == "integer") {
          cfg.kind = ValueKind::int_range;
          cfg.min_value = int_attr("minValue");
          cfg.max_value = int_attr("maxValue");
          if (cfg.min_value && cfg.max_value && *cfg.min_value > *cfg.max_value) {
            throw GrammarParseError(Kind::bad_terminal_config, cfg.name + ": minValue > maxValue");
          }
        } else if (type == "categorical" || type == "category") {
          cfg.kind = ValueKind::categorical;
          std::string values = attr("values").value_or("");
          std::size_t start = 0;
          while (start <= values.size()) {
            auto comma = values.find(',', start);
            auto item = trim(std::string_view(values).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (!item.empty()) cfg.categories.emplace_back(item);
            if (comma == std::string::npos) break;
            start = comma + 1;
          }
          if (cfg.categories.empty()) throw GrammarParseError(Kind::bad_terminal_config, cfg.name + ": no categories");
        } else if (type == "wordset" || type == "word_set" || type == "words") {
          cfg.kind = ValueKind::word_set;
          auto lo = int_attr("minWords").value_or(1);
          auto hi = int_attr("maxWords").value_or(3);
          if (lo < 1 || lo > hi) throw GrammarParseError(Kind::bad_terminal_config, cfg.name + ": need 1 <= minWords <= maxWords");
          cfg.min_words = static_cast<std::size_t>(lo);
          cfg.max_words = static_cast<std::size_t>(hi);
          cfg.source = attr("source").value_or("relevant");
        } else {
          throw GrammarParseError(Kind::bad_terminal_config, cfg.name + ": unknown type '" + type + "'");
        }
        if (auto f = attr("field")) {
          cfg.field = parse_field(*f);
          if (!cfg.field) throw GrammarParseError(Kind::bad_terminal_config, cfg.name + ": unknown field '" + *f + "'");
        } else if (detail::ends_with(cfg.name, "Value")) {
          cfg.field = parse_field(std::string_view(cfg.name).substr(0, cfg.name.size() - 5));
        }
        if (!out.emplace(cfg.name, cfg).second) {
          throw GrammarParseError(Kind::bad_terminal_config, "duplicate terminal " + cfg.name);
        }
      } else if (tag != "<xmlattr>" && tag != "<xmlcomment>") {
        visit(child);
      }
    }
  };
  visit(tree);
  return out;
}

/// Terminals that appear on some right-hand side.
inline std::set<std::string> referenced_terminals(const GrammarSpec& g) {
  std::set<std::string> used;
  for (const auto& [lhs, alts] : g.productions) {
    for (const auto& alt : alts) {
      for (const auto& s : alt) {
        if (g.is_terminal(s)) used.insert(s);
      }
    }
  }
  return used;
}

/// Full grammar: productions plus terminal configuration. Every value
/// terminal ("...Value") needs a configuration.
inline GrammarSpec parse_grammar(std::string_view grammar_text, std::string_view terminal_config_text) {
  using Kind = GrammarParseError::Kind;
  GrammarSpec g = parse_grammar_text(grammar_text);
  auto configs = parse_terminal_config(terminal_config_text);
  for (const auto& t : g.terminals) {
    if (detail::ends_with(t, "Value") && !configs.contains(t)) {
      throw GrammarParseError(Kind::missing_terminal_config, "value terminal " + t + " has no terminal configuration");
    }
  }
  for (auto& [name, cfg] : configs) {
    if (!g.is_terminal(name)) {
      throw GrammarParseError(Kind::bad_terminal_config, "configured terminal " + name + " is not a grammar terminal");
    }
  }
  g.terminal_configs = std::move(configs);
  return g;
}

// ---------------------------------------------------------------------------
// Pruning and binding

/// Fields a dataset can support. Text fields are always present; a
/// bibliometric field is available when at least one record carries it.
inline std::set<Field> available_fields(const Dataset& d) {
  std::set<Field> out{Field::title, Field::abstract, Field::titleAbstract};
  for (const auto& r : d.records()) {
    if (r.year) out.insert(Field::year);
    if (r.n_cites) out.insert(Field::nCites);
    if (r.n_authors) out.insert(Field::nAuthors);
    if (r.paper_type) out.insert(Field::paperType);
  }
  return out;
}

inline std::set<Field> without_bibliometrics(std::set<Field> fields) {
  for (auto f : {Field::year, Field::nCites, Field::nAuthors, Field::paperType}) fields.erase(f);
  return fields;
}

/// Drops every alternative that mentions a terminal for an unavailable field,
/// then removes non-terminals that can no longer derive anything or are no
/// longer reachable from the root.
inline GrammarSpec prune_grammar(const GrammarSpec& spec, std::set<Field> available) {
  if (available.contains(Field::title) && available.contains(Field::abstract)) {
    available.insert(Field::titleAbstract);
  } else {
    available.erase(Field::titleAbstract);
  }
  GrammarSpec g = spec;
  std::set<std::string> dropped_terminals;
  for (const auto& t : g.terminals) {
    if (auto f = detail::field_of_terminal(g, t); f && !available.contains(*f)) dropped_terminals.insert(t);
  }
  for (auto& [nt, alts] : g.productions) {
    std::erase_if(alts, [&](const Alternative& alt) {
      return std::any_of(alt.begin(), alt.end(), [&](const std::string& s) { return dropped_terminals.contains(s); });
    });
  }
  detail::compute_min_derivations(g);
  // Non-productive symbols and alternatives that use them go away together.
  std::set<std::string> dead;
  for (const auto& nt : g.non_terminals) {
    if (g.min_cost(nt) == detail::kInfinite) dead.insert(nt);
  }
  if (dead.contains(g.root)) {
    throw GrammarParseError(GrammarParseError::Kind::underivable,
                            "pruning leaves start symbol " + g.root + " underivable");
  }
  for (const auto& nt : dead) {
    g.productions.erase(nt);
    g.non_terminals.erase(nt);
  }
  for (auto& [nt, alts] : g.productions) {
    std::erase_if(alts, [&](const Alternative& alt) {
      return std::any_of(alt.begin(), alt.end(), [&](const std::string& s) { return dead.contains(s); });
    });
  }
  // Symbols no longer reachable from the root are dropped as well.
  std::set<std::string> reachable{g.root};
  std::vector<std::string> stack{g.root};
  while (!stack.empty()) {
    const auto nt = stack.back();
    stack.pop_back();
    for (const auto& alt : g.productions.at(nt)) {
      for (const auto& s : alt) {
        if (g.is_non_terminal(s) && reachable.insert(s).second) stack.push_back(s);
      }
    }
  }
  for (auto it = g.non_terminals.begin(); it != g.non_terminals.end();) {
    if (reachable.contains(*it)) {
      ++it;
    } else {
      g.productions.erase(*it);
      it = g.non_terminals.erase(it);
    }
  }
  for (const auto& t : dropped_terminals) {
    g.terminals.erase(t);
    g.terminal_configs.erase(t);
  }
  detail::compute_min_derivations(g);
  return g;
}

/// Fills data-derived integer ranges (observed min/max over `rows`) and the
/// word pools of word-set terminals.
inline GrammarSpec bind_terminals(const GrammarSpec& spec, const Dataset& dataset,
                                  const std::vector<std::size_t>& rows, const Vocabulary& vocabulary) {
  GrammarSpec g = spec;
  const auto used = referenced_terminals(g);
  for (auto& [name, cfg] : g.terminal_configs) {
    if (!used.contains(name)) continue;
    if (cfg.kind == ValueKind::int_range && (!cfg.min_value || !cfg.max_value)) {
      if (!cfg.field || !is_numeric(*cfg.field)) {
        throw GrammarError(name + ": integer range without bounds and without a numeric field");
      }
      std::optional<std::int64_t> lo, hi;
      for (auto i : rows) {
        if (auto v = detail::numeric_field(dataset[i], *cfg.field)) {
          lo = lo ? std::min(*lo, *v) : *v;
          hi = hi ? std::max(*hi, *v) : *v;
        }
      }
      if (!lo) throw GrammarError(name + ": no " + std::string(to_string(*cfg.field)) + " values to derive a range from");
      if (!cfg.min_value) cfg.min_value = lo;
      if (!cfg.max_value) cfg.max_value = hi;
      if (*cfg.min_value > *cfg.max_value) throw GrammarError(name + ": empty value range");
    } else if (cfg.kind == ValueKind::word_set) {
      cfg.words = vocabulary.stems();
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Derivation trees

using TerminalValue = std::variant<std::int64_t, std::string, std::vector<std::string>>;

/// Genotype node. Leaves are terminals; value terminals carry a value.
struct DerivationTree {
  std::string symbol;
  std::vector<DerivationTree> children;
  std::optional<TerminalValue> value;

  bool is_leaf() const { return children.empty(); }
  friend bool operator==(const DerivationTree&, const DerivationTree&) = default;
};

/// Production applications in the tree (its internal nodes).
inline std::size_t derivation_count(const DerivationTree& t) {
  if (t.children.empty()) return 0;
  std::size_t n = 1;
  for (const auto& c : t.children) n += derivation_count(c);
  return n;
}

inline std::size_t node_count(const DerivationTree& t) {
  std::size_t n = 1;
  for (const auto& c : t.children) n += node_count(c);
  return n;
}

/// Pointers to all nodes in preorder.
inline void preorder(DerivationTree& t, std::vector<DerivationTree*>& out) {
  out.push_back(&t);
  for (auto& c : t.children) preorder(c, out);
}

inline void preorder(const DerivationTree& t, std::vector<const DerivationTree*>& out) {
  out.push_back(&t);
  for (const auto& c : t.children) preorder(c, out);
}

inline TerminalValue draw_value(const TerminalConfig& cfg, Rng& rng) {
  switch (cfg.kind) {
    case ValueKind::int_range:
      if (!cfg.min_value || !cfg.max_value) throw GrammarError(cfg.name + ": unbound integer range");
      return uniform_int(rng, *cfg.min_value, *cfg.max_value);
    case ValueKind::categorical:
      return cfg.categories[uniform_index(rng, cfg.categories.size())];
    case ValueKind::word_set: {
      if (cfg.words.empty()) throw GrammarError(cfg.name + ": empty vocabulary");
      const std::size_t hi = std::min(cfg.max_words, cfg.words.size());
      const std::size_t lo = std::min(cfg.min_words, hi);
      const auto k = static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
      std::vector<std::size_t> idx(cfg.words.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
      std::vector<std::string> words;
      for (std::size_t i = 0; i < k; ++i) words.push_back(cfg.words[idx[i]]);
      std::sort(words.begin(), words.end());
      return words;
    }
  }
  throw GrammarError("unknown value kind");
}

namespace detail {

inline DerivationTree derive(const GrammarSpec& g, const std::string& symbol, std::size_t budget, Rng& rng) {
  DerivationTree node{symbol, {}, std::nullopt};
  if (!g.is_non_terminal(symbol)) {
    if (const auto* cfg = g.config_for(symbol)) node.value = draw_value(*cfg, rng);
    return node;
  }
  const auto& alts = g.alternatives(symbol);
  std::vector<std::size_t> feasible;
  std::vector<std::size_t> alt_cost(alts.size(), 0);
  for (std::size_t a = 0; a < alts.size(); ++a) {
    std::size_t cost = 1;
    for (const auto& s : alts[a]) {
      if (g.is_non_terminal(s)) {
        const auto c = g.min_cost(s);
        cost = (c == kInfinite || cost == kInfinite) ? kInfinite : cost + c;
      }
    }
    alt_cost[a] = cost;
    if (cost <= budget) feasible.push_back(a);
  }
  if (feasible.empty()) throw GrammarError("derivation budget exhausted at " + symbol);
  const auto chosen = feasible[uniform_index(rng, feasible.size())];
  const auto& alt = alts[chosen];

  std::size_t remaining = budget - 1;
  std::size_t reserved = alt_cost[chosen] - 1;  // minimal cost of the children still to derive
  for (const auto& s : alt) {
    if (!g.is_non_terminal(s)) {
      node.children.push_back(derive(g, s, 0, rng));
      continue;
    }
    reserved -= g.min_cost(s);
    auto child = derive(g, s, remaining - reserved, rng);
    remaining -= derivation_count(child);
    node.children.push_back(std::move(child));
  }
  return node;
}

}  // namespace detail

/// Random derivation from `start` using at most `max_derivations` production
/// applications. Alternatives are chosen uniformly among those that can still
/// be completed within the remaining budget.
inline DerivationTree random_derive(const GrammarSpec& spec, const std::string& start, std::size_t max_derivations, Rng& rng) {
  if (!spec.is_non_terminal(start)) throw GrammarError("random_derive: " + start + " is not a non-terminal");
  const auto need = spec.min_cost(start);
  if (need == detail::kInfinite || need > max_derivations) {
    throw GrammarError("random_derive: " + start + " needs at least " +
                       (need == detail::kInfinite ? std::string("infinitely many") : std::to_string(need)) +
                       " derivations, budget is " + std::to_string(max_derivations));
  }
  return detail::derive(spec, start, max_derivations, rng);
}

namespace detail {

inline std::string check_value(const TerminalConfig& cfg, const std::optional<TerminalValue>& value) {
  if (!value) return cfg.name + ": missing value";
  switch (cfg.kind) {
    case ValueKind::int_range: {
      if (!std::holds_alternative<std::int64_t>(*value)) return cfg.name + ": expected integer";
      const auto v = std::get<std::int64_t>(*value);
      if ((cfg.min_value && v < *cfg.min_value) || (cfg.max_value && v > *cfg.max_value)) {
        return cfg.name + ": value out of range";
      }
      return {};
    }
    case ValueKind::categorical: {
      if (!std::holds_alternative<std::string>(*value)) return cfg.name + ": expected category";
      const auto& v = std::get<std::string>(*value);
      if (std::find(cfg.categories.begin(), cfg.categories.end(), v) == cfg.categories.end()) {
        return cfg.name + ": unknown category " + v;
      }
      return {};
    }
    case ValueKind::word_set: {
      if (!std::holds_alternative<std::vector<std::string>>(*value)) return cfg.name + ": expected word set";
      const auto& words = std::get<std::vector<std::string>>(*value);
      if (words.empty() || words.size() > cfg.max_words) return cfg.name + ": word count out of range";
      if (words.size() < std::min(cfg.min_words, cfg.words.size())) return cfg.name + ": too few words";
      std::set<std::string> uniq(words.begin(), words.end());
      if (uniq.size() != words.size()) return cfg.name + ": repeated word";
      if (!cfg.words.empty()) {
        for (const auto& w : words) {
          if (std::find(cfg.words.begin(), cfg.words.end(), w) == cfg.words.end()) {
            return cfg.name + ": word '" + w + "' not in vocabulary";
          }
        }
      }
      return {};
    }
  }
  return "unknown kind";
}

inline std::string check_node(const GrammarSpec& g, const DerivationTree& t) {
  if (t.children.empty()) {
    if (!g.is_terminal(t.symbol)) return "leaf " + t.symbol + " is not a terminal";
    if (const auto* cfg = g.config_for(t.symbol)) return check_value(*cfg, t.value);
    if (t.value) return "terminal " + t.symbol + " carries an unexpected value";
    return {};
  }
  if (!g.is_non_terminal(t.symbol)) return "internal node " + t.symbol + " is not a non-terminal";
  Alternative seq;
  for (const auto& c : t.children) seq.push_back(c.symbol);
  const auto& alts = g.alternatives(t.symbol);
  if (std::find(alts.begin(), alts.end(), seq) == alts.end()) return "children of " + t.symbol + " match no production";
  for (const auto& c : t.children) {
    if (auto e = check_node(g, c); !e.empty()) return e;
  }
  return {};
}

}  // namespace detail

/// Grammar-membership check: the tree is a complete derivation of
/// `spec.root` (or of its own root symbol when `from_root` is false) within
/// `max_derivations`. Returns an empty string when valid, else the first
/// violation found.
inline std::string check_tree(const GrammarSpec& spec, const DerivationTree& tree, std::size_t max_derivations,
                              bool from_root = true) {
  if (from_root && tree.symbol != spec.root) return "tree root " + tree.symbol + " is not " + spec.root;
  if (derivation_count(tree) > max_derivations) return "derivation count exceeds budget";
  return detail::check_node(spec, tree);
}

inline bool is_valid_tree(const GrammarSpec& spec, const DerivationTree& tree, std::size_t max_derivations,
                          bool from_root = true) {
  return check_tree(spec, tree, max_derivations, from_root).empty();
}

// ---------------------------------------------------------------------------
// Phenotype

namespace detail {

struct Leaf {
  const std::string* symbol;
  const std::optional<TerminalValue>* value;
};

inline void collect_leaves(const DerivationTree& t, std::vector<Leaf>& out) {
  if (t.children.empty()) {
    out.push_back({&t.symbol, &t.value});
    return;
  }
  for (const auto& c : t.children) collect_leaves(c, out);
}

class PrefixReader {
 public:
  explicit PrefixReader(const std::vector<Leaf>& leaves) : leaves_(leaves) {}

  std::vector<Clause> expression() {
    const auto& sym = next();
    if (sym == "and") {
      auto lhs = expression();
      auto rhs = expression();
      lhs.insert(lhs.end(), rhs.begin(), rhs.end());
      return lhs;
    }
    if (sym == "not") {
      auto inner = expression();
      Clause neg{true, {}};
      for (auto& c : inner) {
        if (c.negated) throw InvariantError("phenotype: nested negation is not representable");
        neg.conditions.insert(neg.conditions.end(), c.conditions.begin(), c.conditions.end());
      }
      return {neg};
    }
    if (sym == "or") throw InvariantError("phenotype: disjunction is not representable");
    --pos_;
    return {Clause{false, {condition()}}};
  }

  bool consequent() {
    const auto& cmp = next();
    if (cmp != "equals" && cmp != "notEquals") throw InvariantError("phenotype: bad consequent comparator " + cmp);
    if (next() != "isCandidate") throw InvariantError("phenotype: consequent must test isCandidate");
    const auto& v = value_of(pos_ - 1 + 1);
    ++pos_;
    bool cls = false;
    if (!v || !std::holds_alternative<std::string>(*v)) throw InvariantError("phenotype: consequent value missing");
    const auto s = to_lower(std::get<std::string>(*v));
    if (s == "true" || s == "1" || s == "yes") cls = true;
    else if (s == "false" || s == "0" || s == "no") cls = false;
    else throw InvariantError("phenotype: bad class value " + s);
    return cmp == "equals" ? cls : !cls;
  }

  bool done() const { return pos_ == leaves_.size(); }

 private:
  const std::vector<Leaf>& leaves_;
  std::size_t pos_ = 0;

  const std::string& next() {
    if (pos_ >= leaves_.size()) throw InvariantError("phenotype: truncated leaf sequence");
    return *leaves_[pos_++].symbol;
  }
  const std::optional<TerminalValue>& value_of(std::size_t i) const {
    if (i >= leaves_.size()) throw InvariantError("phenotype: truncated leaf sequence");
    return *leaves_[i].value;
  }

  Condition condition() {
    const auto& cmp_sym = next();
    auto cmp = parse_comparator(cmp_sym);
    if (!cmp) throw InvariantError("phenotype: expected comparator, got " + cmp_sym);
    const auto& field_sym = next();
    auto field = parse_field(field_sym);
    if (!field) throw InvariantError("phenotype: expected field, got " + field_sym);
    const auto& v = value_of(pos_);
    ++pos_;
    if (!v) throw InvariantError("phenotype: value terminal without value after " + field_sym);
    Condition c;
    c.field = *field;
    c.comparator = *cmp;
    if (std::holds_alternative<std::int64_t>(*v)) c.value = std::get<std::int64_t>(*v);
    else if (std::holds_alternative<std::string>(*v)) c.value = std::vector<std::string>{std::get<std::string>(*v)};
    else c.value = std::get<std::vector<std::string>>(*v);
    try {
      validate(c);
    } catch (const ParameterError& e) {
      throw InvariantError(std::string("phenotype: ") + e.what());
    }
    return c;
  }
};

}  // namespace detail

/// Reads the leaves in preorder: a prefix expression over and/not/comparisons
/// for the antecedent, then `cmp isCandidate value` for the consequent.
/// Plain clauses are kept one condition each.
inline Rule phenotype(const DerivationTree& tree) {
  std::vector<detail::Leaf> leaves;
  detail::collect_leaves(tree, leaves);
  detail::PrefixReader reader(leaves);
  Rule rule;
  rule.clauses = reader.expression();
  rule.predicted_class = reader.consequent();
  if (!reader.done()) throw InvariantError("phenotype: trailing symbols after consequent");
  return rule;
}

}  // namespace irecs
