#pragma once

#include <string>
#include <string_view>

namespace irecs {

// Porter (1980) suffix-stripping stemmer, original published rule set
// (abli -> able in step 2, no logi rule, no short-word shortcut).
// Input is expected lowercase ASCII; other bytes are treated as consonants.
class PorterStemmer {
 public:
  std::string operator()(std::string_view input) const {
    std::string w(input);
    step1a(w);
    step1b(w);
    step1c(w);
    step2(w);
    step3(w);
    step4(w);
    step5a(w);
    step5b(w);
    return w;
  }

 private:
  struct Rule {
    std::string_view suffix;
    std::string_view replacement;
  };

  static bool is_consonant(std::string_view w, std::size_t i) {
    switch (w[i]) {
      case 'a': case 'e': case 'i': case 'o': case 'u': return false;
      case 'y': return i == 0 ? true : !is_consonant(w, i - 1);
      default: return true;
    }
  }

  // m in [C](VC)^m[V]
  static int measure(std::string_view w) {
    int m = 0;
    std::size_t i = 0;
    const std::size_t n = w.size();
    while (i < n && is_consonant(w, i)) ++i;
    while (i < n) {
      while (i < n && !is_consonant(w, i)) ++i;
      if (i >= n) break;
      while (i < n && is_consonant(w, i)) ++i;
      ++m;
    }
    return m;
  }

  static bool has_vowel(std::string_view w) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!is_consonant(w, i)) return true;
    }
    return false;
  }

  static bool ends_double_consonant(std::string_view w) {
    const auto n = w.size();
    return n >= 2 && w[n - 1] == w[n - 2] && is_consonant(w, n - 1);
  }

  // *o: stem ends cvc, final c not w, x or y
  static bool ends_cvc(std::string_view w) {
    const auto n = w.size();
    if (n < 3) return false;
    const char last = w[n - 1];
    return is_consonant(w, n - 3) && !is_consonant(w, n - 2) && is_consonant(w, n - 1) &&
           last != 'w' && last != 'x' && last != 'y';
  }

  static bool ends_with(std::string_view w, std::string_view suffix) {
    return w.size() >= suffix.size() && w.substr(w.size() - suffix.size()) == suffix;
  }

  static std::string_view stem_without(std::string_view w, std::string_view suffix) {
    return w.substr(0, w.size() - suffix.size());
  }

  // Applies the first rule whose suffix matches, provided the remaining stem
  // satisfies `cond`. Only the first matching suffix is considered.
  template <typename Cond>
  static void apply_first(std::string& w, std::initializer_list<Rule> rules, Cond cond) {
    for (const auto& r : rules) {
      if (!ends_with(w, r.suffix)) continue;
      const std::string_view stem = stem_without(w, r.suffix);
      if (cond(stem)) w = std::string(stem) + std::string(r.replacement);
      return;
    }
  }

  static void step1a(std::string& w) {
    apply_first(w, {{"sses", "ss"}, {"ies", "i"}, {"ss", "ss"}, {"s", ""}},
                [](std::string_view) { return true; });
  }

  static void step1b(std::string& w) {
    if (ends_with(w, "eed")) {
      const auto stem = stem_without(w, "eed");
      if (measure(stem) > 0) w = std::string(stem) + "ee";
      return;
    }
    std::string stem;
    bool removed = false;
    for (std::string_view suffix : {std::string_view("ed"), std::string_view("ing")}) {
      if (ends_with(w, suffix) && has_vowel(stem_without(w, suffix))) {
        stem = std::string(stem_without(w, suffix));
        removed = true;
        break;
      }
    }
    if (!removed) return;
    if (ends_with(stem, "at") || ends_with(stem, "bl") || ends_with(stem, "iz")) {
      w = stem + "e";
    } else if (ends_double_consonant(stem)) {
      const char last = stem.back();
      w = (last == 'l' || last == 's' || last == 'z') ? stem : stem.substr(0, stem.size() - 1);
    } else if (measure(stem) == 1 && ends_cvc(stem)) {
      w = stem + "e";
    } else {
      w = stem;
    }
  }

  static void step1c(std::string& w) {
    if (ends_with(w, "y") && has_vowel(stem_without(w, "y"))) w.back() = 'i';
  }

  static void step2(std::string& w) {
    apply_first(w,
                {{"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
                 {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
                 {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
                 {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
                 {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"}},
                [](std::string_view s) { return measure(s) > 0; });
  }

  static void step3(std::string& w) {
    apply_first(w,
                {{"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"}, {"ical", "ic"},
                 {"ful", ""}, {"ness", ""}},
                [](std::string_view s) { return measure(s) > 0; });
  }

  static void step4(std::string& w) {
    static constexpr std::string_view suffixes[] = {
        "al",  "ance", "ence", "er",  "ic",  "able", "ible", "ant", "ement", "ment",
        "ent", "ion",  "ou",   "ism", "ate", "iti",  "ous",  "ive", "ize"};
    for (auto suffix : suffixes) {
      if (!ends_with(w, suffix)) continue;
      const auto stem = stem_without(w, suffix);
      bool ok = measure(stem) > 1;
      if (ok && suffix == "ion") ok = !stem.empty() && (stem.back() == 's' || stem.back() == 't');
      if (ok) w = std::string(stem);
      return;
    }
  }

  static void step5a(std::string& w) {
    if (!ends_with(w, "e")) return;
    const auto stem = stem_without(w, "e");
    const int m = measure(stem);
    if (m > 1 || (m == 1 && !ends_cvc(stem))) w = std::string(stem);
  }

  static void step5b(std::string& w) {
    if (ends_with(w, "ll") && measure(std::string_view(w).substr(0, w.size() - 1)) > 1) w.pop_back();
  }
};

inline std::string porter_stem(std::string_view word) { return PorterStemmer{}(word); }

}  // namespace irecs
