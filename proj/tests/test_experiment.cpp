#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>

#include "irecs/experiment.hpp"
#include "toy_data.hpp"

using namespace irecs;
namespace fs = std::filesystem;

namespace {

RunConfig small_config() {
  RunConfig c;
  c.evolve.max_generations = 15;
  c.evolve.population_size = 40;
  c.seeds = {1, 2};
  c.folds = 3;
  return c;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("irecs_exp_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("run config validation and JSON overlay") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  apply_json(c, nlohmann::json::parse(R"({"seeds": 3, "folds": 4, "strategy": "cba", "replacement": "elit",
                                          "archive_threshold": 0.3, "use_bibliometrics": false})"));
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(c.folds == 4);
  CHECK(c.strategy == Strategy::cba);
  CHECK(c.evolve.replacement == Replacement::elit);
  CHECK(c.evolve.archive_threshold == 0.3);
  CHECK_FALSE(c.use_bibliometrics);

  RunConfig back;
  apply_json(back, to_json(c));
  CHECK(to_json(back) == to_json(c));

  CHECK_THROWS_AS(apply_json(c, nlohmann::json::parse(R"({"populaton_size": 5})")), ParameterError);
  CHECK_THROWS_AS(apply_json(c, nlohmann::json::parse(R"({"strategy": "cart"})")), ParameterError);
  CHECK_THROWS_AS(apply_json(c, nlohmann::json::parse(R"({"folds": "five"})")), ParameterError);
  RunConfig bad;
  bad.seeds.clear();
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = RunConfig{};
  bad.folds = 1;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("config hash tracks result-relevant settings only") {
  RunConfig a, b;
  b.output_dir = "/elsewhere";
  b.jobs = 8;
  b.evolve.workers = 4;
  CHECK(config_hash(a) == config_hash(b));
  b.evolve.population_size = 99;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("per-run seeds are distinct") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    for (std::size_t f = 0; f < 5; ++f) seen.insert(evolution_seed(s, f));
  }
  CHECK(seen.size() == 50);
}

TEST_CASE("training vocabulary ignores records outside the training rows") {
  const auto d = toy::separable(3);
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i % 2 == 0) train.push_back(i);
  }
  const auto v = training_vocabulary(d, train, 100);
  const auto again = training_vocabulary(d.subset(train), [&] {
    std::vector<std::size_t> all(train.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }(), 100);
  CHECK(v.terms == again.terms);
}

TEST_CASE("experiment cardinality, determinism and recomputable aggregate") {
  const auto d = toy::separable(5);
  const auto cfg = small_config();
  const auto r1 = run_experiment(d, cfg);
  REQUIRE(r1.runs.size() == 6);
  CHECK(r1.failures() == 0);

  auto par = cfg;
  par.jobs = 3;
  par.evolve.workers = 2;
  const auto r2 = run_experiment(d, par);
  const auto csv1 = metrics_csv(r1);
  CHECK(csv1 == metrics_csv(r2));
  CHECK(rule_stats_csv(r1) == rule_stats_csv(r2));
  for (std::size_t i = 0; i < r1.runs.size(); ++i) {
    CHECK(export_json(r1.runs[i].outcome->classifier) == export_json(r2.runs[i].outcome->classifier));
  }

  std::size_t lines = 0;
  for (char ch : csv1) lines += ch == '\n';
  CHECK(lines == 7);

  TempDir tmp;
  write_reports(r1, cfg, tmp.path.string());
  const auto agg = nlohmann::json::parse(read_file((tmp.path / "aggregate.json").string()));
  const auto recomputed = aggregate_metrics_csv(read_file((tmp.path / "metrics.csv").string()));
  CHECK(agg["metrics"] == recomputed["metrics"]);
  CHECK(agg["runs"] == 6);
  CHECK(agg["failed_runs"] == 0);
  for (const auto& run : r1.runs) {
    const auto rd = tmp.path / "runs" / run_dir_name(run.seed, run.fold);
    CHECK(fs::exists(rd / "classifier.txt"));
    CHECK(fs::exists(rd / "archive.tsv"));
    CHECK(fs::exists(rd / "evolution.jsonl"));
    const auto back = import_json(read_file((rd / "classifier.json").string()));
    CHECK(back == run.outcome->classifier);
  }

  // The aggregate mean is the plain mean of the per-run column.
  double sum = 0;
  std::size_t n = 0;
  for (const auto& run : r1.runs) {
    if (run.outcome->metrics.balanced_accuracy) {
      sum += *run.outcome->metrics.balanced_accuracy;
      ++n;
    }
  }
  CHECK(agg["metrics"]["balanced_accuracy"]["mean"].get<double>() == sum / static_cast<double>(n));
}

TEST_CASE("test labels do not influence the built classifier") {
  const auto d = toy::separable(9);
  auto cfg = small_config();
  const auto base = load_grammar("", "");
  const auto folds = stratified_folds(d, 3, split_seed(1));
  std::mt19937_64 rng(2);
  for (const auto& split : folds) {
    auto records = d.records();
    std::vector<bool> labels;
    for (auto i : split.test) labels.push_back(!records[i].label);  // flip, then shuffle
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t k = 0; k < split.test.size(); ++k) records[split.test[k]].label = labels[k];
    const Dataset permuted(d.name(), records);

    const auto a = run_fold(d, stem_cache(d), split, base, cfg, 77);
    const auto b = run_fold(permuted, stem_cache(permuted), split, base, cfg, 77);
    CHECK(export_json(a.classifier) == export_json(b.classifier));
    CHECK(export_text(a.classifier) == export_text(b.classifier));
  }
}

TEST_CASE("failed runs are recorded and the rest continue") {
  const auto d = toy::separable(5);
  auto cfg = small_config();
  cfg.evolve.archive_threshold = 1.01;  // no rule can qualify
  auto previous = warning_sink();
  warning_sink() = nullptr;
  const auto r = run_experiment(d, cfg);
  warning_sink() = previous;
  CHECK(r.failures() == r.runs.size());
  CHECK(r.runs[0].error.find("archive") != std::string::npos);
  const auto agg = aggregate_json(r, cfg);
  CHECK(agg["failed_runs"] == r.runs.size());
  CHECK(agg["errors"].size() == r.runs.size());
  CHECK(metrics_csv(r).find(",error\n") != std::string::npos);
}

TEST_CASE("runs without bibliometrics produce rules without bibliometric conditions") {
  const auto d = toy::separable(4);
  auto cfg = small_config();
  cfg.use_bibliometrics = false;
  cfg.seeds = {1};
  const auto r = run_experiment(d, cfg);
  for (const auto& run : r.runs) {
    REQUIRE(run.outcome);
    CHECK(run.outcome->stats.positive.generated_bibliometric_operators == 0);
    CHECK(run.outcome->stats.negative.generated_bibliometric_operators == 0);
    for (const auto& rule : run.outcome->archive) {
      for (auto f : {Field::nCites, Field::nAuthors, Field::year, Field::paperType}) CHECK_FALSE(rule.references(f));
    }
  }
}
