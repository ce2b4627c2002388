#pragma once

// Requires CPPHTTPLIB_OPENSSL_SUPPORT (and OpenSSL) for https base URLs.

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "irecs/enrich.hpp"

namespace irecs {

/// Abstract-retrieval lookup by DOI against an Elsevier-style REST API.
/// Mapping: citedby-count -> n_cites, year of prism:coverDate -> year,
/// number of listed authors -> n_authors, prism:aggregationType -> paper_type.
class ScopusProvider : public Provider {
 public:
  struct Options {
    std::string base_url = "https://api.elsevier.com";
    std::string api_key;  // empty: read IRECS_SCOPUS_API_KEY
    int timeout_seconds = 20;
  };

  explicit ScopusProvider(Options options) : options_(std::move(options)) {
    if (options_.api_key.empty()) {
      if (const char* k = std::getenv("IRECS_SCOPUS_API_KEY")) options_.api_key = k;
    }
  }

  bool has_credentials() const { return !options_.api_key.empty(); }

  BiblioRecord lookup(const std::string& raw_doi) override {
    const auto doi = normalize_doi(raw_doi);
    if (!has_credentials()) {
      throw LookupError(LookupError::Kind::auth, "no API key configured (set IRECS_SCOPUS_API_KEY)");
    }
    httplib::Client client(options_.base_url);
    client.set_connection_timeout(options_.timeout_seconds);
    client.set_read_timeout(options_.timeout_seconds);
    const httplib::Headers headers = {{"X-ELS-APIKey", options_.api_key}, {"Accept", "application/json"}};
    const auto res = client.Get("/content/abstract/doi/" + encode_path(doi), headers);
    if (!res) throw LookupError(LookupError::Kind::transient, "request for " + doi + " failed: " + httplib::to_string(res.error()));
    if (res->status == 401 || res->status == 403) {
      throw LookupError(LookupError::Kind::auth, "request for " + doi + " rejected (HTTP " + std::to_string(res->status) + ")");
    }
    BiblioRecord out;
    out.doi = doi;
    out.fetched_at = utc_timestamp();
    if (res->status == 404) return out;
    if (res->status != 200) {
      throw LookupError(LookupError::Kind::transient, "request for " + doi + " returned HTTP " + std::to_string(res->status));
    }
    try {
      return parse_response(doi, nlohmann::json::parse(res->body), out.fetched_at);
    } catch (const nlohmann::json::exception& e) {
      throw LookupError(LookupError::Kind::transient, "unreadable response for " + doi + ": " + e.what());
    }
  }

  static BiblioRecord parse_response(const std::string& doi, const nlohmann::json& body, std::string fetched_at = {}) {
    BiblioRecord out;
    out.doi = doi;
    out.fetched_at = std::move(fetched_at);
    const auto& root = body.contains("abstracts-retrieval-response") ? body.at("abstracts-retrieval-response") : body;
    if (!root.is_object()) return out;
    auto as_int = [](const nlohmann::json& v) -> std::optional<std::int64_t> {
      if (v.is_number_integer()) return v.get<std::int64_t>();
      if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s.empty()) return std::nullopt;
        char* end = nullptr;
        const long long x = std::strtoll(s.c_str(), &end, 10);
        if (end == s.c_str()) return std::nullopt;
        return x;
      }
      return std::nullopt;
    };
    if (root.contains("coredata")) {
      const auto& core = root.at("coredata");
      if (core.contains("citedby-count")) out.n_cites = as_int(core.at("citedby-count"));
      if (core.contains("prism:coverDate")) out.year = as_int(core.at("prism:coverDate").get<std::string>().substr(0, 4));
      if (core.contains("prism:aggregationType")) {
        const auto t = to_lower(core.at("prism:aggregationType").get<std::string>());
        if (t.find("journal") != std::string::npos) out.paper_type = PaperType::journal;
        else if (t.find("conference") != std::string::npos || t.find("proceeding") != std::string::npos) out.paper_type = PaperType::conference;
        else out.paper_type = PaperType::other;
      }
    }
    if (root.contains("authors") && root.at("authors").is_object() && root.at("authors").contains("author")) {
      const auto& a = root.at("authors").at("author");
      const std::int64_t n = a.is_array() ? static_cast<std::int64_t>(a.size()) : 1;
      if (n >= 1) out.n_authors = n;
    }
    if (out.n_cites && *out.n_cites < 0) out.n_cites.reset();
    return out;
  }

 private:
  static std::string encode_path(const std::string& s) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
      if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~' || c == '/') {
        out += static_cast<char>(c);
      } else {
        out += '%';
        out += hex[c >> 4];
        out += hex[c & 15];
      }
    }
    return out;
  }

  Options options_;
};

}  // namespace irecs
