#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "irecs/common.hpp"

namespace irecs {

enum class PaperType { journal, conference, other };

inline std::string_view to_string(PaperType t) {
  switch (t) {
    case PaperType::journal: return "journal";
    case PaperType::conference: return "conference";
    case PaperType::other: return "other";
  }
  return "other";
}

inline std::optional<PaperType> parse_paper_type(std::string_view s) {
  const auto v = to_lower(trim(s));
  if (v == "journal") return PaperType::journal;
  if (v == "conference") return PaperType::conference;
  if (v == "other") return PaperType::other;
  return std::nullopt;
}

/// One candidate paper returned by a literature search.
struct PaperRecord {
  std::string id;
  std::string title;
  std::string abstract;
  std::optional<std::int64_t> year;
  std::optional<std::int64_t> n_cites;
  std::optional<std::int64_t> n_authors;
  std::optional<PaperType> paper_type;
  std::optional<std::string> doi;
  bool label = false;  // true = selected as primary study

  bool has_biblio() const {
    return year.has_value() && n_cites.has_value() && n_authors.has_value() &&
           paper_type.has_value();
  }

  friend bool operator==(const PaperRecord&, const PaperRecord&) = default;
};

/// Immutable, id-unique collection of papers.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::string name, std::vector<PaperRecord> records)
      : name_(std::move(name)), records_(std::move(records)) {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (!seen.insert(r.id).second) {
        throw LoadError("duplicate record id '" + r.id + "' (row " + std::to_string(i + 1) + ")");
      }
      if (r.n_authors && *r.n_authors < 1) {
        throw LoadError("record '" + r.id + "': n_authors must be >= 1");
      }
      if (r.n_cites && *r.n_cites < 0) {
        throw LoadError("record '" + r.id + "': n_cites must be >= 0");
      }
    }
    has_biblio_ = std::all_of(records_.begin(), records_.end(),
                              [](const PaperRecord& r) { return r.has_biblio(); });
  }

  const std::string& name() const { return name_; }
  const std::vector<PaperRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  bool has_biblio() const { return has_biblio_; }
  const PaperRecord& operator[](std::size_t i) const { return records_[i]; }

  /// Subset in the given index order, keeping the dataset name.
  Dataset subset(const std::vector<std::size_t>& indices) const {
    std::vector<PaperRecord> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(records_.at(i));
    return Dataset(name_, std::move(out));
  }

 private:
  std::string name_;
  std::vector<PaperRecord> records_;
  bool has_biblio_ = true;
};

struct ClassCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

inline ClassCounts class_counts(const Dataset& dataset) {
  ClassCounts c;
  for (const auto& r : dataset.records()) (r.label ? c.positives : c.negatives)++;
  return c;
}

// ---------------------------------------------------------------------------
// CSV

namespace csv {

/// Parses RFC 4180 text into rows of fields. Each row carries the line
/// number it starts on. Quoted fields may contain commas, quotes ("") and
/// line breaks.
struct Row {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

inline std::vector<Row> parse(std::string_view text) {
  std::vector<Row> rows;
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

  std::size_t line = 1;
  std::size_t i = 0;
  while (i < text.size()) {
    Row row;
    row.line = line;
    std::string field;
    bool row_done = false;
    while (!row_done) {
      field.clear();
      if (i < text.size() && text[i] == '"') {
        ++i;
        bool closed = false;
        while (i < text.size()) {
          char c = text[i];
          if (c == '"') {
            if (i + 1 < text.size() && text[i + 1] == '"') {
              field.push_back('"');
              i += 2;
              continue;
            }
            ++i;
            closed = true;
            break;
          }
          if (c == '\n') ++line;
          field.push_back(c);
          ++i;
        }
        if (!closed) throw LoadError("line " + std::to_string(row.line) + ": unterminated quoted field");
        if (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
          throw LoadError("line " + std::to_string(line) + ": unexpected character after closing quote");
        }
      } else {
        while (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
          field.push_back(text[i++]);
        }
      }
      row.fields.push_back(field);
      if (i >= text.size()) {
        row_done = true;
      } else if (text[i] == ',') {
        ++i;
      } else {
        if (text[i] == '\r') ++i;
        if (i < text.size() && text[i] == '\n') ++i;
        ++line;
        row_done = true;
      }
    }
    // Skip fully blank lines.
    if (!(row.fields.size() == 1 && row.fields[0].empty())) rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string quote(std::string_view field) {
  const bool needs = field.find_first_of(",\"\r\n") != std::string_view::npos ||
                     (!field.empty() && (field.front() == ' ' || field.back() == ' '));
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

}  // namespace csv

inline constexpr std::string_view kDatasetColumns[] = {
    "id", "title", "abstract", "year", "n_cites", "n_authors", "paper_type", "doi", "label"};

inline std::optional<bool> parse_label(std::string_view s) {
  const auto v = to_lower(trim(s));
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  return std::nullopt;
}

struct LoadOptions {
  /// When false an empty label cell is accepted (inference input) and read as false.
  bool require_label = true;
};

namespace detail {

inline std::optional<std::int64_t> parse_int_cell(std::string_view cell, std::string_view column,
                                                  std::size_t row) {
  auto v = trim(cell);
  if (v.empty()) return std::nullopt;
  std::int64_t out = 0;
  std::size_t pos = 0;
  bool neg = false;
  if (v[0] == '-' || v[0] == '+') {
    neg = v[0] == '-';
    pos = 1;
  }
  if (pos == v.size()) throw LoadError("row " + std::to_string(row) + ": unparsable " + std::string(column));
  for (; pos < v.size(); ++pos) {
    if (!std::isdigit(static_cast<unsigned char>(v[pos]))) {
      throw LoadError("row " + std::to_string(row) + ": unparsable " + std::string(column) + " '" +
                      std::string(v) + "'");
    }
    out = out * 10 + (v[pos] - '0');
  }
  return neg ? -out : out;
}

}  // namespace detail

inline Dataset parse_dataset(std::string_view text, std::string name, const LoadOptions& opts = {}) {
  auto rows = csv::parse(text);
  if (rows.empty()) throw LoadError("missing header row");
  const auto& header = rows.front().fields;
  const std::size_t ncols = std::size(kDatasetColumns);
  bool header_ok = header.size() == ncols;
  for (std::size_t c = 0; header_ok && c < ncols; ++c) {
    header_ok = to_lower(trim(header[c])) == kDatasetColumns[c];
  }
  if (!header_ok) {
    throw LoadError("header must be: id,title,abstract,year,n_cites,n_authors,paper_type,doi,label");
  }

  std::vector<PaperRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    const std::size_t rowno = r + 1;  // header is row 1
    if (f.size() != ncols) {
      throw LoadError("row " + std::to_string(rowno) + " (line " + std::to_string(rows[r].line) +
                      "): expected " + std::to_string(ncols) + " columns, got " +
                      std::to_string(f.size()));
    }
    PaperRecord rec;
    rec.id = std::string(trim(f[0]));
    if (rec.id.empty()) throw LoadError("row " + std::to_string(rowno) + ": empty id");
    rec.title = f[1];
    rec.abstract = f[2];
    rec.year = detail::parse_int_cell(f[3], "year", rowno);
    rec.n_cites = detail::parse_int_cell(f[4], "n_cites", rowno);
    rec.n_authors = detail::parse_int_cell(f[5], "n_authors", rowno);
    if (rec.n_cites && *rec.n_cites < 0) throw LoadError("row " + std::to_string(rowno) + ": negative n_cites");
    if (rec.n_authors && *rec.n_authors < 1) throw LoadError("row " + std::to_string(rowno) + ": n_authors < 1");
    if (!trim(f[6]).empty()) {
      rec.paper_type = parse_paper_type(f[6]);
      if (!rec.paper_type) {
        throw LoadError("row " + std::to_string(rowno) + ": unknown paper_type '" + f[6] + "'");
      }
    }
    if (!trim(f[7]).empty()) rec.doi = std::string(trim(f[7]));
    if (trim(f[8]).empty() && !opts.require_label) {
      rec.label = false;
    } else {
      auto label = parse_label(f[8]);
      if (!label) throw LoadError("row " + std::to_string(rowno) + ": unparsable label '" + f[8] + "'");
      rec.label = *label;
    }
    records.push_back(std::move(rec));
  }
  try {
    return Dataset(std::move(name), std::move(records));
  } catch (const LoadError& e) {
    throw LoadError(std::string("load error: ") + e.what());
  }
}

enum class DatasetFormat { csv };

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string stem_of_path(const std::string& path) {
  auto slash = path.find_last_of("/\\");
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  auto dot = base.find_last_of('.');
  return dot == std::string::npos ? base : base.substr(0, dot);
}

inline Dataset load_dataset(const std::string& path, DatasetFormat format = DatasetFormat::csv,
                            const LoadOptions& opts = {}) {
  (void)format;
  try {
    return parse_dataset(read_file(path), stem_of_path(path), opts);
  } catch (const LoadError& e) {
    throw LoadError(path + ": " + e.what());
  }
}

inline std::string serialize_dataset(const Dataset& dataset) {
  std::string out = "id,title,abstract,year,n_cites,n_authors,paper_type,doi,label\n";
  auto num = [](const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) : std::string(); };
  for (const auto& r : dataset.records()) {
    out += csv::quote(r.id) + ',' + csv::quote(r.title) + ',' + csv::quote(r.abstract) + ',' +
           num(r.year) + ',' + num(r.n_cites) + ',' + num(r.n_authors) + ',' +
           (r.paper_type ? std::string(to_string(*r.paper_type)) : std::string()) + ',' +
           csv::quote(r.doi.value_or("")) + ',' + (r.label ? "1" : "0") + '\n';
  }
  return out;
}

inline void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write '" + path + "'");
  out << serialize_dataset(dataset);
}

// ---------------------------------------------------------------------------
// Stratified cross-validation

/// One fold: record indices into the source dataset, ascending.
struct FoldSplit {
  std::size_t fold_index = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  std::vector<std::string> train_ids(const Dataset& d) const { return ids(d, train); }
  std::vector<std::string> test_ids(const Dataset& d) const { return ids(d, test); }

  friend bool operator==(const FoldSplit&, const FoldSplit&) = default;

 private:
  static std::vector<std::string> ids(const Dataset& d, const std::vector<std::size_t>& idx) {
    std::vector<std::string> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(d[i].id);
    return out;
  }
};

/// Stratified k-fold split. Each class is shuffled and dealt round-robin; the
/// negatives continue where the positives stopped so fold sizes also differ
/// by at most one. Which folds receive the remainders is decided by a seeded
/// permutation of the fold order. With fewer positives than k some test folds
/// hold no positives.
inline std::vector<FoldSplit> stratified_folds(const Dataset& dataset, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ParameterError("stratified_folds: k must be >= 2");
  if (dataset.size() < k) throw ParameterError("stratified_folds: fewer records than folds");

  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < dataset.size(); ++i) (dataset[i].label ? pos : neg).push_back(i);

  Rng rng(seed);
  shuffle(pos, rng);
  shuffle(neg, rng);
  std::vector<std::size_t> fold_order(k);
  for (std::size_t f = 0; f < k; ++f) fold_order[f] = f;
  shuffle(fold_order, rng);

  std::vector<std::size_t> assignment(dataset.size());
  std::size_t slot = 0;
  for (auto i : pos) assignment[i] = fold_order[slot++ % k];
  for (auto i : neg) assignment[i] = fold_order[slot++ % k];

  std::vector<FoldSplit> folds(k);
  for (std::size_t f = 0; f < k; ++f) folds[f].fold_index = f;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t f = 0; f < k; ++f) {
      (assignment[i] == f ? folds[f].test : folds[f].train).push_back(i);
    }
  }
  return folds;
}

}  // namespace irecs
