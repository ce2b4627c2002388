#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "irecs/common.hpp"
#include "irecs/corpus.hpp"

namespace irecs {

/// Bibliometric fields for one DOI. All-absent means the provider had no data.
struct BiblioRecord {
  std::string doi;
  std::optional<std::int64_t> year;
  std::optional<std::int64_t> n_cites;
  std::optional<std::int64_t> n_authors;
  std::optional<PaperType> paper_type;
  std::string fetched_at;

  bool empty() const { return !year && !n_cites && !n_authors && !paper_type; }
  friend bool operator==(const BiblioRecord&, const BiblioRecord&) = default;
};

/// Lowercased DOI with any resolver prefix removed.
inline std::string normalize_doi(std::string_view raw) {
  auto s = to_lower(trim(raw));
  for (std::string_view prefix : {"https://doi.org/", "http://doi.org/", "https://dx.doi.org/", "http://dx.doi.org/", "doi:"}) {
    if (s.rfind(prefix, 0) == 0) {
      s = s.substr(prefix.size());
      break;
    }
  }
  return std::string(trim(s));
}

inline void validate(const BiblioRecord& r) {
  if (r.doi.empty()) throw ParameterError("bibliometric record without doi");
  if (r.n_cites && *r.n_cites < 0) throw ParameterError("doi " + r.doi + ": n_cites must be >= 0");
  if (r.n_authors && *r.n_authors < 1) throw ParameterError("doi " + r.doi + ": n_authors must be >= 1");
}

inline nlohmann::json to_json(const BiblioRecord& r) {
  auto opt = [](const std::optional<std::int64_t>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"doi", r.doi},
          {"year", opt(r.year)},
          {"n_cites", opt(r.n_cites)},
          {"n_authors", opt(r.n_authors)},
          {"paper_type", r.paper_type ? nlohmann::json(std::string(to_string(*r.paper_type))) : nlohmann::json(nullptr)},
          {"fetched_at", r.fetched_at}};
}

inline BiblioRecord biblio_from_json(const nlohmann::json& j) {
  auto opt = [&](const char* key) -> std::optional<std::int64_t> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::int64_t>();
  };
  BiblioRecord r;
  r.doi = normalize_doi(j.at("doi").get<std::string>());
  r.year = opt("year");
  r.n_cites = opt("n_cites");
  r.n_authors = opt("n_authors");
  if (j.contains("paper_type") && !j.at("paper_type").is_null()) {
    const auto s = j.at("paper_type").get<std::string>();
    r.paper_type = parse_paper_type(s);
    if (!r.paper_type) throw LoadError("doi " + r.doi + ": unknown paper_type '" + s + "'");
  }
  r.fetched_at = j.value("fetched_at", std::string());
  validate(r);
  return r;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Providers

class LookupError : public Error {
 public:
  enum class Kind { transient, auth };
  LookupError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline std::string_view to_string(LookupError::Kind k) { return k == LookupError::Kind::auth ? "auth" : "transient"; }

/// DOI lookup service. Implementations must be safe to call concurrently.
/// A DOI the service does not know yields an all-absent record; failures
/// to reach or authenticate with the service throw LookupError.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual BiblioRecord lookup(const std::string& doi) = 0;
};

/// File-backed provider for tests and offline use:
///   {"records": {"<doi>": {"year": .., "n_cites": .., ...}},
///    "failures": {"<doi>": "transient" | "auth"}}
class StubProvider : public Provider {
 public:
  StubProvider() = default;

  explicit StubProvider(const nlohmann::json& j) {
    if (j.contains("records")) {
      for (const auto& [doi, fields] : j.at("records").items()) {
        auto copy = fields;
        copy["doi"] = doi;
        auto r = biblio_from_json(copy);
        records_[r.doi] = r;
      }
    }
    if (j.contains("failures")) {
      for (const auto& [doi, kind] : j.at("failures").items()) {
        const auto k = kind.get<std::string>();
        if (k != "transient" && k != "auth") throw LoadError("stub provider: unknown failure kind '" + k + "'");
        failures_[normalize_doi(doi)] = k == "auth" ? LookupError::Kind::auth : LookupError::Kind::transient;
      }
    }
  }

  static std::unique_ptr<StubProvider> from_file(const std::string& path) {
    try {
      return std::make_unique<StubProvider>(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(path + ": " + e.what());
    }
  }

  void add(BiblioRecord r) {
    r.doi = normalize_doi(r.doi);
    records_[r.doi] = std::move(r);
  }
  void fail(const std::string& doi, LookupError::Kind kind) { failures_[normalize_doi(doi)] = kind; }

  BiblioRecord lookup(const std::string& doi) override {
    ++calls_;
    const auto key = normalize_doi(doi);
    if (auto f = failures_.find(key); f != failures_.end()) {
      throw LookupError(f->second, "stub failure for " + key);
    }
    if (auto it = records_.find(key); it != records_.end()) return it->second;
    BiblioRecord none;
    none.doi = key;
    return none;
  }

  std::size_t calls() const { return calls_.load(); }

 private:
  std::map<std::string, BiblioRecord> records_;
  std::map<std::string, LookupError::Kind> failures_;
  std::atomic<std::size_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Cache

/// DOI -> record map persisted as JSON lines; on load the last line for a
/// DOI wins. Writes append one line and are serialized.
class BiblioCache {
 public:
  BiblioCache() = default;

  /// Loads `path` if it exists; later puts append to it.
  explicit BiblioCache(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) return;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      try {
        auto r = biblio_from_json(nlohmann::json::parse(line));
        entries_[r.doi] = std::move(r);
      } catch (const std::exception& e) {
        throw LoadError(path_ + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  std::optional<BiblioRecord> find(const std::string& doi) const {
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(normalize_doi(doi)); it != entries_.end()) return it->second;
    return std::nullopt;
  }

  void put(BiblioRecord r) {
    r.doi = normalize_doi(r.doi);
    validate(r);
    std::lock_guard lock(mutex_);
    if (!path_.empty()) {
      std::ofstream out(path_, std::ios::app);
      if (!out) throw Error("cannot append to cache " + path_);
      out << to_json(r).dump() << '\n';
    }
    entries_[r.doi] = std::move(r);
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }
  const std::string& path() const { return path_; }
  std::map<std::string, BiblioRecord> entries() const {
    std::lock_guard lock(mutex_);
    return entries_;
  }

 private:
  std::string path_;
  std::map<std::string, BiblioRecord> entries_;
  mutable std::mutex mutex_;
};

/// Manual corrections: CSV with columns doi,year,n_cites,n_authors,paper_type
/// (any subset besides doi).
inline std::map<std::string, BiblioRecord> parse_overrides(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty()) return {};
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].fields.size(); ++i) col[to_lower(trim(rows[0].fields[i]))] = i;
  if (!col.contains("doi")) throw LoadError("overrides: missing 'doi' column");
  std::map<std::string, BiblioRecord> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    auto cell = [&](const char* name) -> std::string_view {
      auto it = col.find(name);
      return it == col.end() || it->second >= f.size() ? std::string_view() : trim(f[it->second]);
    };
    BiblioRecord b;
    b.doi = normalize_doi(cell("doi"));
    if (b.doi.empty()) continue;
    const std::string where = "overrides line " + std::to_string(rows[r].line);
    b.year = detail::parse_int_cell(cell("year"), "year", rows[r].line);
    b.n_cites = detail::parse_int_cell(cell("n_cites"), "n_cites", rows[r].line);
    b.n_authors = detail::parse_int_cell(cell("n_authors"), "n_authors", rows[r].line);
    if (auto pt = cell("paper_type"); !pt.empty()) {
      b.paper_type = parse_paper_type(pt);
      if (!b.paper_type) throw LoadError(where + ": unknown paper_type '" + std::string(pt) + "'");
    }
    b.fetched_at = "manual";
    try {
      validate(b);
    } catch (const ParameterError& e) {
      throw LoadError(where + ": " + e.what());
    }
    out[b.doi] = b;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Enrichment

struct EnrichFailure {
  std::string record_id;
  std::string doi;
  LookupError::Kind kind = LookupError::Kind::transient;
  std::string message;
};

struct EnrichReport {
  std::size_t candidates = 0;      // records with a doi and a missing field
  std::size_t from_overrides = 0;  // candidates touched by an override
  std::size_t from_cache = 0;
  std::size_t from_provider = 0;   // distinct DOIs fetched successfully
  std::size_t not_found = 0;       // distinct DOIs the provider had no data for
  std::size_t filled_fields = 0;
  std::vector<EnrichFailure> failures;
};

inline nlohmann::json to_json(const EnrichReport& r) {
  nlohmann::json fails = nlohmann::json::array();
  for (const auto& f : r.failures) {
    fails.push_back({{"id", f.record_id}, {"doi", f.doi}, {"kind", to_string(f.kind)}, {"message", f.message}});
  }
  return {{"candidates", r.candidates},   {"from_overrides", r.from_overrides}, {"from_cache", r.from_cache},
          {"from_provider", r.from_provider}, {"not_found", r.not_found},       {"filled_fields", r.filled_fields},
          {"failures", fails}};
}

struct EnrichOptions {
  std::size_t parallelism = 4;
};

namespace detail {

inline bool missing_biblio(const PaperRecord& r) {
  return !r.year || !r.n_cites || !r.n_authors || !r.paper_type;
}

/// Fills absent fields of `r` from `b`; returns the number filled.
inline std::size_t fill_absent(PaperRecord& r, const BiblioRecord& b) {
  std::size_t n = 0;
  auto fill = [&](auto& dst, const auto& src) {
    if (!dst && src) {
      dst = src;
      ++n;
    }
  };
  fill(r.year, b.year);
  fill(r.n_cites, b.n_cites);
  fill(r.n_authors, b.n_authors);
  fill(r.paper_type, b.paper_type);
  return n;
}

}  // namespace detail

/// Fills missing bibliometric fields from overrides, then the cache, then
/// the provider (nullptr = cache only). Present values are kept. Provider
/// results, including not-found, are written to the cache; failures are not.
inline Dataset enrich_dataset(const Dataset& dataset, Provider* provider, BiblioCache& cache,
                              const std::map<std::string, BiblioRecord>& overrides = {},
                              const EnrichOptions& options = {}, EnrichReport* report = nullptr) {
  EnrichReport rep;
  std::vector<PaperRecord> records = dataset.records();
  std::vector<std::size_t> pending;  // record positions still needing a lookup

  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    if (!r.doi || trim(*r.doi).empty() || !detail::missing_biblio(r)) continue;
    ++rep.candidates;
    const auto doi = normalize_doi(*r.doi);
    if (auto it = overrides.find(doi); it != overrides.end()) {
      ++rep.from_overrides;
      rep.filled_fields += detail::fill_absent(r, it->second);
      if (!detail::missing_biblio(r)) continue;
    }
    if (auto hit = cache.find(doi)) {
      ++rep.from_cache;
      rep.filled_fields += detail::fill_absent(r, *hit);
      continue;
    }
    pending.push_back(i);
  }

  if (provider && !pending.empty()) {
    std::vector<std::string> dois;
    for (auto i : pending) dois.push_back(normalize_doi(*records[i].doi));
    std::sort(dois.begin(), dois.end());
    dois.erase(std::unique(dois.begin(), dois.end()), dois.end());

    std::map<std::string, BiblioRecord> fetched;
    std::map<std::string, std::pair<LookupError::Kind, std::string>> failed;
    std::mutex mutex;
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t k = next++; k < dois.size(); k = next++) {
        try {
          auto b = provider->lookup(dois[k]);
          b.doi = dois[k];
          if (b.fetched_at.empty()) b.fetched_at = utc_timestamp();
          cache.put(b);
          std::lock_guard lock(mutex);
          fetched[dois[k]] = std::move(b);
        } catch (const LookupError& e) {
          std::lock_guard lock(mutex);
          failed[dois[k]] = {e.kind(), e.what()};
        } catch (const std::exception& e) {
          std::lock_guard lock(mutex);
          failed[dois[k]] = {LookupError::Kind::transient, e.what()};
        }
      }
    };
    const auto n_threads = std::clamp<std::size_t>(options.parallelism, 1, dois.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    for (const auto& [doi, b] : fetched) (b.empty() ? rep.not_found : rep.from_provider)++;
    for (auto i : pending) {
      auto& r = records[i];
      const auto doi = normalize_doi(*r.doi);
      if (auto it = fetched.find(doi); it != fetched.end()) {
        rep.filled_fields += detail::fill_absent(r, it->second);
      } else if (auto f = failed.find(doi); f != failed.end()) {
        rep.failures.push_back({r.id, doi, f->second.first, f->second.second});
      }
    }
  }

  if (report) *report = std::move(rep);
  return Dataset(dataset.name(), std::move(records));
}

}  // namespace irecs
