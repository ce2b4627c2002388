#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <thread>

#include "irecs/enrich.hpp"
#include "irecs/scopus.hpp"

using namespace irecs;
namespace fs = std::filesystem;

namespace {

PaperRecord rec(std::string id, std::optional<std::string> doi) {
  PaperRecord r;
  r.id = std::move(id);
  r.title = "t";
  r.doi = std::move(doi);
  return r;
}

BiblioRecord biblio(std::string doi, std::optional<std::int64_t> cites, std::optional<std::int64_t> year = {},
                    std::optional<std::int64_t> authors = {}, std::optional<PaperType> type = {}) {
  BiblioRecord b;
  b.doi = std::move(doi);
  b.n_cites = cites;
  b.year = year;
  b.n_authors = authors;
  b.paper_type = type;
  return b;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("irecs_enrich_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("doi normalization") {
  CHECK(normalize_doi(" https://doi.org/10.1/ABC ") == "10.1/abc");
  CHECK(normalize_doi("doi:10.1/x") == "10.1/x");
  CHECK(normalize_doi("10.1/x") == "10.1/x");
}

TEST_CASE("stub provider echoes seeded records and reports not-found") {
  StubProvider stub(nlohmann::json::parse(R"({"records": {"10.1/x": {"n_cites": 12}}, "failures": {"10.1/bad": "auth"}})"));
  const auto hit = stub.lookup("10.1/x");
  CHECK(hit.n_cites == 12);
  CHECK_FALSE(hit.year);
  CHECK(stub.lookup("10.9/unknown").empty());
  try {
    stub.lookup("10.1/bad");
    FAIL("expected a lookup error");
  } catch (const LookupError& e) {
    CHECK(e.kind() == LookupError::Kind::auth);
  }
}

TEST_CASE("cache round-trips and the last line wins") {
  TempDir tmp;
  const auto path = (tmp.path / "cache.jsonl").string();
  {
    BiblioCache cache(path);
    auto b = biblio("10.1/x", 3, 2001, 2, PaperType::journal);
    b.fetched_at = "2020-01-01T00:00:00Z";
    cache.put(b);
    cache.put(biblio("10.1/y", std::nullopt));
    auto newer = b;
    newer.n_cites = 7;
    cache.put(newer);
  }
  BiblioCache reloaded(path);
  CHECK(reloaded.size() == 2);
  auto x = reloaded.find("10.1/X");
  REQUIRE(x);
  CHECK(x->n_cites == 7);
  CHECK(x->year == 2001);
  CHECK(x->paper_type == PaperType::journal);
  CHECK(x->fetched_at == "2020-01-01T00:00:00Z");
  REQUIRE(reloaded.find("10.1/y"));
  CHECK(reloaded.find("10.1/y")->empty());

  std::ofstream(path, std::ios::app) << "{not json\n";
  CHECK_THROWS_AS(BiblioCache(path), LoadError);
}

TEST_CASE("enrichment precedence and no-overwrite") {
  BiblioCache cache;
  cache.put(biblio("10.1/cached", 12));
  StubProvider stub;
  stub.add(biblio("10.1/cached", 99, 1999));
  stub.add(biblio("10.1/live", 5, 2010, 3, PaperType::conference));

  auto complete = rec("full", "10.1/live");
  complete.year = 2000;
  complete.n_cites = 1;
  complete.n_authors = 1;
  complete.paper_type = PaperType::journal;
  auto partial = rec("partial", "10.1/live");
  partial.year = 1990;

  const Dataset d("d", {rec("c", "10.1/cached"), complete, partial, rec("nodoi", std::nullopt)});
  EnrichReport report;
  const auto out = enrich_dataset(d, &stub, cache, {}, {}, &report);

  CHECK(out[0].n_cites == 12);  // from cache
  CHECK_FALSE(out[0].year);     // cache entry is authoritative; provider not asked
  CHECK(out[1] == complete);
  CHECK(out[2].year == 1990);  // existing value kept
  CHECK(out[2].n_cites == 5);
  CHECK(out[2].paper_type == PaperType::conference);
  CHECK(out[3] == d[3]);
  CHECK(stub.calls() == 1);
  CHECK(report.candidates == 2);
  CHECK(report.from_cache == 1);
  CHECK(report.from_provider == 1);
  CHECK(cache.find("10.1/live"));
  CHECK(out.has_biblio() == false);
}

TEST_CASE("overrides take precedence over cache and provider") {
  BiblioCache cache;
  cache.put(biblio("10.1/a", 12, 2001));
  StubProvider stub;
  const auto overrides = parse_overrides("doi,year,n_cites,n_authors,paper_type\n10.1/A,2005,,4,journal\n");
  REQUIRE(overrides.size() == 1);
  const Dataset d("d", {rec("a", "10.1/a")});
  const auto out = enrich_dataset(d, &stub, cache, overrides);
  CHECK(out[0].year == 2005);
  CHECK(out[0].n_authors == 4);
  CHECK(out[0].n_cites == 12);
  CHECK(stub.calls() == 0);
  CHECK_THROWS_AS(parse_overrides("year\n2001\n"), LoadError);
  CHECK_THROWS_AS(parse_overrides("doi,n_authors\n10.1/a,0\n"), LoadError);
}

TEST_CASE("partial provider failure is reported and not cached") {
  BiblioCache cache;
  StubProvider stub;
  stub.add(biblio("10.1/a", 1, 2001, 1, PaperType::journal));
  stub.add(biblio("10.1/b", 2, 2002, 2, PaperType::journal));
  stub.fail("10.1/c", LookupError::Kind::transient);
  const Dataset d("d", {rec("a", "10.1/a"), rec("b", "10.1/b"), rec("c", "10.1/c")});
  EnrichReport report;
  const auto out = enrich_dataset(d, &stub, cache, {}, {.parallelism = 3}, &report);
  CHECK(out[0].has_biblio());
  CHECK(out[1].has_biblio());
  CHECK_FALSE(out[2].n_cites);
  REQUIRE(report.failures.size() == 1);
  CHECK(report.failures[0].record_id == "c");
  CHECK(report.failures[0].kind == LookupError::Kind::transient);
  CHECK_FALSE(cache.find("10.1/c"));
  CHECK(out.has_biblio() == false);
}

TEST_CASE("not-found answers are cached so the provider is asked once") {
  BiblioCache cache;
  StubProvider stub;
  const Dataset d("d", {rec("a", "10.1/nothing"), rec("b", "10.1/NOTHING")});
  EnrichReport report;
  enrich_dataset(d, &stub, cache, {}, {}, &report);
  CHECK(stub.calls() == 1);
  CHECK(report.not_found == 1);
  REQUIRE(cache.find("10.1/nothing"));
  enrich_dataset(d, &stub, cache);
  CHECK(stub.calls() == 1);
}

TEST_CASE("enrichment is idempotent and parallelism does not change the result") {
  std::vector<PaperRecord> recs;
  StubProvider stub;
  for (int i = 0; i < 40; ++i) {
    recs.push_back(rec("r" + std::to_string(i), "10.5/" + std::to_string(i % 25)));
    if (i % 3) stub.add(biblio("10.5/" + std::to_string(i), i, 1990 + i, 1 + i % 5, PaperType::journal));
  }
  const Dataset d("d", recs);
  BiblioCache c1, c8;
  const auto once = enrich_dataset(d, &stub, c1, {}, {.parallelism = 1});
  const auto par = enrich_dataset(d, &stub, c8, {}, {.parallelism = 8});
  CHECK(once.records() == par.records());
  const auto calls = stub.calls();
  const auto twice = enrich_dataset(once, &stub, c1);
  CHECK(twice.records() == once.records());
  CHECK(stub.calls() == calls);
}

TEST_CASE("scopus response mapping") {
  const auto body = nlohmann::json::parse(R"({"abstracts-retrieval-response": {
      "coredata": {"citedby-count": "42", "prism:coverDate": "2011-06-01", "prism:aggregationType": "Conference Proceeding"},
      "authors": {"author": [{"@seq": "1"}, {"@seq": "2"}, {"@seq": "3"}]}}})");
  const auto b = ScopusProvider::parse_response("10.1/x", body);
  CHECK(b.n_cites == 42);
  CHECK(b.year == 2011);
  CHECK(b.n_authors == 3);
  CHECK(b.paper_type == PaperType::conference);
}

TEST_CASE("scopus provider against a local server") {
  httplib::Server server;
  server.Get(R"(/content/abstract/doi/(.+))", [](const httplib::Request& req, httplib::Response& res) {
    if (req.get_header_value("X-ELS-APIKey") != "secret") {
      res.status = 401;
      return;
    }
    const auto doi = req.matches[1].str();
    if (doi == "10.1/x") {
      res.set_content(R"({"abstracts-retrieval-response": {"coredata": {"citedby-count": "7",
          "prism:coverDate": "2004-01-01", "prism:aggregationType": "Journal"},
          "authors": {"author": {"@seq": "1"}}}})",
                      "application/json");
    } else if (doi == "10.1/busy") {
      res.status = 503;
    } else {
      res.status = 404;
    }
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  const std::string base = "http://127.0.0.1:" + std::to_string(port);

  ScopusProvider ok({.base_url = base, .api_key = "secret", .timeout_seconds = 5});
  const auto b = ok.lookup("10.1/x");
  CHECK(b.n_cites == 7);
  CHECK(b.year == 2004);
  CHECK(b.n_authors == 1);
  CHECK(b.paper_type == PaperType::journal);
  CHECK(ok.lookup("10.1/none").empty());
  try {
    ok.lookup("10.1/busy");
    FAIL("expected a transient error");
  } catch (const LookupError& e) {
    CHECK(e.kind() == LookupError::Kind::transient);
  }

  ScopusProvider wrong({.base_url = base, .api_key = "nope", .timeout_seconds = 5});
  BiblioCache cache;
  EnrichReport report;
  enrich_dataset(Dataset("d", {rec("a", "10.1/x")}), &wrong, cache, {}, {}, &report);
  REQUIRE(report.failures.size() == 1);
  CHECK(report.failures[0].kind == LookupError::Kind::auth);
  CHECK(cache.size() == 0);

  server.stop();
  t.join();
}

TEST_CASE("scopus provider without credentials fails before any request") {
  ::unsetenv("IRECS_SCOPUS_API_KEY");
  ScopusProvider p({.base_url = "http://127.0.0.1:1", .api_key = "", .timeout_seconds = 1});
  CHECK_FALSE(p.has_credentials());
  try {
    p.lookup("10.1/x");
    FAIL("expected an auth error");
  } catch (const LookupError& e) {
    CHECK(e.kind() == LookupError::Kind::auth);
  }
}
