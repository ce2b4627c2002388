#pragma once

#include <string_view>

// Bundled copies of data/irecs.bnf and data/terminals.xml.

namespace irecs {

inline constexpr std::string_view kDefaultGrammar = R"BNF(# Rule grammar for candidate-study classification.
S = <rule>

N = { <rule>, <antc>, <consq>, <cmp>, <numCmp>, <textCmp>, <catCmptor>, <numCmptor>, <textCmptor> }

T = { not, and, or, equals, notEquals, >, <, >=, <=, containsAll, containsAny,
      nCites, nAuthors, year, title, abstract, titleAbstract, paperType,
      isCandidate, candidateStudyValue, numValue, nCitesValue, nAuthorsValue,
      yearValue, titleValue, abstractValue, titleAbstractValue, paperTypeValue }

P = {
  <rule>       ::= <antc> <consq>
  <antc>       ::= <cmp> | not <cmp> | and <cmp> <antc>

  <consq>      ::= <catCmptor> isCandidate candidateStudyValue

  <cmp>        ::= and <numCmp> <textCmp> | <textCmp>

  <numCmp>     ::= <numCmptor> nCites nCitesValue
                 | <numCmptor> nAuthors nAuthorsValue
                 | <numCmptor> year yearValue

  <textCmp>    ::= <textCmptor> title titleValue
                 | <textCmptor> abstract abstractValue
                 | <textCmptor> titleAbstract titleAbstractValue
                 | <textCmptor> paperType paperTypeValue

  <catCmptor>  ::= equals | notEquals

  <numCmptor>  ::= > | < | >= | <=

  <textCmptor> ::= containsAll | containsAny
}
)BNF";

inline constexpr std::string_view kDefaultTerminals = R"XML(<?xml version="1.0" encoding="UTF-8"?>
<!-- Integer ranges without minValue/maxValue are taken from the training data. -->
<terminals>
  <terminal name="nCitesValue" code="nCitesValue" type="int" />
  <terminal name="nAuthorsValue" code="nAuthorsValue" type="int" minValue="1" maxValue="20" />
  <terminal name="yearValue" code="yearValue" type="int" />
  <terminal name="numValue" code="numValue" type="int" />
  <terminal name="titleValue" code="titleValue" type="wordset" minWords="1" maxWords="3" source="relevant" />
  <terminal name="abstractValue" code="abstractValue" type="wordset" minWords="1" maxWords="3" source="relevant" />
  <terminal name="titleAbstractValue" code="titleAbstractValue" type="wordset" minWords="1" maxWords="3" source="relevant" />
  <terminal name="paperTypeValue" code="paperTypeValue" type="categorical" values="journal,conference" />
  <terminal name="candidateStudyValue" code="candidateStudyValue" type="categorical" values="True,False" />
</terminals>
)XML";

}  // namespace irecs
