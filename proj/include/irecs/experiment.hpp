#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "irecs/classifier.hpp"
#include "irecs/corpus.hpp"
#include "irecs/default_grammar.hpp"
#include "irecs/enrich.hpp"
#include "irecs/evolve.hpp"
#include "irecs/grammar.hpp"
#include "irecs/metrics.hpp"
#include "irecs/rules.hpp"
#include "irecs/text.hpp"

namespace irecs {

struct RunConfig {
  std::string dataset_path;
  EvolveConfig evolve;  // evolve.seed is replaced per run
  Strategy strategy = Strategy::scba;
  std::size_t folds = 5;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::size_t top_k = 100;
  std::string vocabulary_path;  // user vocabulary; replaces the mined one
  std::string grammar_path;     // empty: bundled grammar
  std::string terminals_path;   // empty: bundled terminal configuration
  bool use_bibliometrics = true;
  std::string enrich_cache_path;  // cache-only enrichment before splitting
  std::string overrides_path;
  std::string output_dir;
  std::size_t jobs = 1;  // concurrent seed x fold runs

  void validate() const {
    if (seeds.empty()) throw ParameterError("run: seed list is empty");
    if (folds < 2) throw ParameterError("run: folds must be >= 2");
    if (top_k < 1) throw ParameterError("run: top_k must be >= 1");
    if (jobs < 1) throw ParameterError("run: jobs must be >= 1");
    evolve.validate();
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"dataset", c.dataset_path},
          {"max_generations", c.evolve.max_generations},
          {"population_size", c.evolve.population_size},
          {"crossover_prob", c.evolve.crossover_prob},
          {"mutation_prob", c.evolve.mutation_prob},
          {"max_derivations", c.evolve.max_derivations},
          {"replacement", to_string(c.evolve.replacement)},
          {"archive_threshold", c.evolve.archive_threshold},
          {"workers", c.evolve.workers},
          {"strategy", to_string(c.strategy)},
          {"folds", c.folds},
          {"seeds", c.seeds},
          {"top_k", c.top_k},
          {"vocabulary", c.vocabulary_path},
          {"grammar", c.grammar_path},
          {"terminals", c.terminals_path},
          {"use_bibliometrics", c.use_bibliometrics},
          {"enrich_cache", c.enrich_cache_path},
          {"overrides", c.overrides_path},
          {"output_dir", c.output_dir},
          {"jobs", c.jobs}};
}

/// Applies the keys present in `j` over `c`. Unknown keys are rejected.
inline void apply_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ParameterError("config: expected a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "dataset") c.dataset_path = v.get<std::string>();
      else if (key == "max_generations") c.evolve.max_generations = v.get<std::size_t>();
      else if (key == "population_size") c.evolve.population_size = v.get<std::size_t>();
      else if (key == "crossover_prob") c.evolve.crossover_prob = v.get<double>();
      else if (key == "mutation_prob") c.evolve.mutation_prob = v.get<double>();
      else if (key == "max_derivations") c.evolve.max_derivations = v.get<std::size_t>();
      else if (key == "replacement") {
        auto r = parse_replacement(v.get<std::string>());
        if (!r) throw ParameterError("config: unknown replacement '" + v.get<std::string>() + "'");
        c.evolve.replacement = *r;
      } else if (key == "archive_threshold") c.evolve.archive_threshold = v.get<double>();
      else if (key == "workers") c.evolve.workers = v.get<std::size_t>();
      else if (key == "strategy") {
        auto s = parse_strategy(v.get<std::string>());
        if (!s) throw ParameterError("config: unknown strategy '" + v.get<std::string>() + "'");
        c.strategy = *s;
      } else if (key == "folds") c.folds = v.get<std::size_t>();
      else if (key == "seeds") {
        if (v.is_number_integer()) {
          const auto n = v.get<std::size_t>();
          c.seeds.clear();
          for (std::size_t s = 1; s <= n; ++s) c.seeds.push_back(s);
        } else {
          c.seeds = v.get<std::vector<std::uint64_t>>();
        }
      } else if (key == "top_k") c.top_k = v.get<std::size_t>();
      else if (key == "vocabulary") c.vocabulary_path = v.get<std::string>();
      else if (key == "grammar") c.grammar_path = v.get<std::string>();
      else if (key == "terminals") c.terminals_path = v.get<std::string>();
      else if (key == "use_bibliometrics") c.use_bibliometrics = v.get<bool>();
      else if (key == "enrich_cache") c.enrich_cache_path = v.get<std::string>();
      else if (key == "overrides") c.overrides_path = v.get<std::string>();
      else if (key == "output_dir") c.output_dir = v.get<std::string>();
      else if (key == "jobs") c.jobs = v.get<std::size_t>();
      else throw ParameterError("config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("config: ") + e.what());
  }
}

/// Hash of everything that can change results (not paths to outputs or
/// parallelism settings).
inline std::string config_hash(const RunConfig& c) {
  auto j = to_json(c);
  j.erase("output_dir");
  j.erase("jobs");
  j.erase("workers");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

/// Split seed for one experiment seed, and evolution seed for one of its folds.
inline std::uint64_t split_seed(std::uint64_t seed) { return mix64(seed); }
inline std::uint64_t evolution_seed(std::uint64_t seed, std::size_t fold) {
  return mix64(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(fold) + 1);
}

inline GrammarSpec load_grammar(const std::string& grammar_path, const std::string& terminals_path) {
  const std::string g = grammar_path.empty() ? std::string(kDefaultGrammar) : read_file(grammar_path);
  const std::string t = terminals_path.empty() ? std::string(kDefaultTerminals) : read_file(terminals_path);
  return parse_grammar(g, t);
}

/// Mined vocabulary for the training rows only: positive top_k minus negative top_k.
inline Vocabulary training_vocabulary(const Dataset& dataset, const std::vector<std::size_t>& train, std::size_t top_k) {
  const Dataset part = dataset.subset(train);
  return relevant_vocabulary(class_vocabulary(part, true, top_k), class_vocabulary(part, false, top_k));
}

// ---------------------------------------------------------------------------
// One fold

struct FoldOutcome {
  Vocabulary vocabulary;
  std::vector<Rule> archive;
  RuleClassifier classifier;
  ConfusionMatrix confusion;
  MetricsReport metrics;
  RuleStats stats;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t distinct_evaluations = 0;
  std::string evolution_log;
};

/// Train on `split.train`, test on `split.test`. Nothing computed before the
/// test step reads test records.
inline FoldOutcome run_fold(const Dataset& dataset, const StemCache& stems, const FoldSplit& split, const GrammarSpec& base,
                            const RunConfig& config, std::uint64_t seed, const std::optional<Vocabulary>& user_vocabulary = {}) {
  FoldOutcome out;
  out.train_size = split.train.size();
  out.test_size = split.test.size();
  out.vocabulary = user_vocabulary ? *user_vocabulary : training_vocabulary(dataset, split.train, config.top_k);
  const auto spec = prepare_grammar(base, dataset, split.train, out.vocabulary, config.use_bibliometrics);

  const CoverageIndex train(dataset, stems, split.train);
  EvolveConfig ec = config.evolve;
  ec.seed = seed;
  std::ostringstream log;
  auto evo = run_evolution(train, spec, ec, &log);
  out.evolution_log = log.str();
  out.distinct_evaluations = evo.distinct_evaluations;
  out.archive = std::move(evo.rules);
  out.classifier = build_classifier(out.archive, train, config.strategy);
  out.stats = rule_stats(out.classifier, out.archive);

  const CoverageIndex test(dataset, stems, split.test);
  const auto predictions = predict_all(out.classifier, test);
  std::vector<bool> truths;
  truths.reserve(split.test.size());
  for (auto i : split.test) truths.push_back(dataset[i].label);
  out.confusion = confusion(predictions, truths);
  out.metrics = metrics(out.confusion);
  return out;
}

// ---------------------------------------------------------------------------
// Seeds x folds

struct RunRecord {
  std::uint64_t seed = 0;
  std::size_t fold = 0;
  std::optional<FoldOutcome> outcome;
  std::string error;
};

struct ExperimentResult {
  std::string dataset;
  std::string config_hash;
  std::vector<RunRecord> runs;  // seed-major, fold-minor

  std::size_t failures() const {
    std::size_t n = 0;
    for (const auto& r : runs) n += r.outcome ? 0 : 1;
    return n;
  }
};

inline Dataset load_run_dataset(const RunConfig& config) {
  Dataset d = load_dataset(config.dataset_path);
  if (!config.enrich_cache_path.empty() || !config.overrides_path.empty()) {
    BiblioCache cache = config.enrich_cache_path.empty() ? BiblioCache() : BiblioCache(config.enrich_cache_path);
    const auto overrides = config.overrides_path.empty() ? std::map<std::string, BiblioRecord>{}
                                                         : parse_overrides(read_file(config.overrides_path));
    d = enrich_dataset(d, nullptr, cache, overrides);
  }
  return d;
}

/// Runs every seed x fold on `dataset`. Failed runs keep their error text;
/// the others are unaffected. Results do not depend on `config.jobs`.
inline ExperimentResult run_experiment(const Dataset& dataset, const RunConfig& config) {
  config.validate();
  const auto base = load_grammar(config.grammar_path, config.terminals_path);
  std::optional<Vocabulary> user_vocab;
  if (!config.vocabulary_path.empty()) user_vocab = load_vocabulary(config.vocabulary_path);
  const auto stems = stem_cache(dataset);

  ExperimentResult result;
  result.dataset = dataset.name();
  result.config_hash = config_hash(config);

  std::vector<std::vector<FoldSplit>> splits;
  for (auto seed : config.seeds) {
    splits.push_back(stratified_folds(dataset, config.folds, split_seed(seed)));
    for (std::size_t f = 0; f < config.folds; ++f) result.runs.push_back({seed, f, std::nullopt, {}});
  }

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < result.runs.size(); k = next++) {
      auto& run = result.runs[k];
      try {
        run.outcome = run_fold(dataset, stems, splits[k / config.folds][run.fold], base, config,
                               evolution_seed(run.seed, run.fold), user_vocab);
      } catch (const std::exception& e) {
        run.error = e.what();
      }
    }
  };
  const auto n_threads = std::min(config.jobs, result.runs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return result;
}

// ---------------------------------------------------------------------------
// Reports

inline constexpr const char* kMetricsHeader =
    "dataset,seed,fold,config_hash,train_size,test_size,tp,tn,fp,fn,recall,precision,specificity,accuracy,"
    "balanced_accuracy,classifier_rules,status";

inline std::string metrics_csv(const ExperimentResult& r) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& run : r.runs) {
    out += csv::quote(r.dataset) + "," + std::to_string(run.seed) + "," + std::to_string(run.fold) + "," + r.config_hash + ",";
    if (!run.outcome) {
      out += ",,,,,,,,,,,,error\n";
      continue;
    }
    const auto& o = *run.outcome;
    out += std::to_string(o.train_size) + "," + std::to_string(o.test_size) + "," + std::to_string(o.confusion.tp) + "," +
           std::to_string(o.confusion.tn) + "," + std::to_string(o.confusion.fp) + "," + std::to_string(o.confusion.fn);
    for (auto field : kMetricFields) out += "," + format_metric(o.metrics.*field);
    out += "," + std::to_string(o.classifier.rules.size()) + ",ok\n";
  }
  return out;
}

inline std::string rule_stats_csv(const ExperimentResult& r) {
  std::string out =
      "seed,fold,class,classifier_rules,length_mean,length_stdev,generated_rules,bibliometric_operators,"
      "generated_bibliometric_operators\n";
  for (const auto& run : r.runs) {
    if (!run.outcome) continue;
    for (bool cls : {true, false}) {
      const auto& s = cls ? run.outcome->stats.positive : run.outcome->stats.negative;
      out += std::to_string(run.seed) + "," + std::to_string(run.fold) + "," + (cls ? "True" : "False") + "," +
             std::to_string(s.classifier_rules) + "," + format_metric(s.length_mean) + "," + format_metric(s.length_stdev) +
             "," + std::to_string(s.generated_rules) + "," + std::to_string(s.bibliometric_operators) + "," +
             std::to_string(s.generated_bibliometric_operators) + "\n";
    }
  }
  return out;
}

inline nlohmann::json summary_json(const Summary& s) {
  return {{"mean", s.mean}, {"std", s.stdev}, {"n", s.n}, {"excluded", s.excluded}};
}

/// Per-metric summaries from the metrics CSV text, so the aggregate can
/// always be recomputed from the emitted file.
inline nlohmann::json aggregate_metrics_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw LoadError("metrics csv: empty");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].fields.size(); ++i) col[rows[0].fields[i]] = i;
  nlohmann::json out = nlohmann::json::object();
  std::size_t failed = 0, ok = 0, max_rules = 0;
  std::vector<std::vector<Metric>> values(std::size(kMetricNames));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    if (f.at(col.at("status")) != "ok") {
      ++failed;
      continue;
    }
    ++ok;
    for (std::size_t m = 0; m < std::size(kMetricNames); ++m) values[m].push_back(parse_metric(f.at(col.at(kMetricNames[m]))));
    max_rules = std::max<std::size_t>(max_rules, std::stoul(f.at(col.at("classifier_rules"))));
  }
  nlohmann::json metrics = nlohmann::json::object();
  for (std::size_t m = 0; m < std::size(kMetricNames); ++m) metrics[kMetricNames[m]] = summary_json(summarize(values[m]));
  out["metrics"] = metrics;
  out["runs"] = ok + failed;
  out["failed_runs"] = failed;
  out["max_classifier_rules"] = max_rules;
  return out;
}

inline nlohmann::json aggregate_json(const ExperimentResult& r, const RunConfig& config) {
  auto out = aggregate_metrics_csv(metrics_csv(r));
  out["dataset"] = r.dataset;
  out["config_hash"] = r.config_hash;
  out["config"] = to_json(config);

  nlohmann::json stats = nlohmann::json::object();
  for (bool cls : {true, false}) {
    std::vector<Metric> cr, rl, tr, bo;
    for (const auto& run : r.runs) {
      if (!run.outcome) continue;
      const auto& s = cls ? run.outcome->stats.positive : run.outcome->stats.negative;
      cr.push_back(static_cast<double>(s.classifier_rules));
      if (s.classifier_rules > 0) rl.push_back(s.length_mean);
      tr.push_back(static_cast<double>(s.generated_rules));
      bo.push_back(static_cast<double>(s.bibliometric_operators));
    }
    stats[cls ? "positive" : "negative"] = {{"classifier_rules", summary_json(summarize(cr))},
                                            {"rule_length", summary_json(summarize(rl))},
                                            {"generated_rules", summary_json(summarize(tr))},
                                            {"bibliometric_operators", summary_json(summarize(bo))}};
  }
  out["rule_stats"] = stats;

  nlohmann::json errors = nlohmann::json::array();
  for (const auto& run : r.runs) {
    if (!run.outcome) errors.push_back({{"seed", run.seed}, {"fold", run.fold}, {"error", run.error}});
  }
  out["errors"] = errors;
  return out;
}

inline std::string run_dir_name(std::uint64_t seed, std::size_t fold) {
  return "seed" + std::to_string(seed) + "_fold" + std::to_string(fold);
}

/// Writes metrics.csv, rule_stats.csv, aggregate.json, config.json and one
/// directory per run with the classifier, archive, vocabulary and log.
inline void write_reports(const ExperimentResult& r, const RunConfig& config, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto write = [](const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
  };
  write(fs::path(dir) / "metrics.csv", metrics_csv(r));
  write(fs::path(dir) / "rule_stats.csv", rule_stats_csv(r));
  write(fs::path(dir) / "aggregate.json", aggregate_json(r, config).dump(2) + "\n");
  write(fs::path(dir) / "config.json", to_json(config).dump(2) + "\n");
  for (const auto& run : r.runs) {
    const auto rd = fs::path(dir) / "runs" / run_dir_name(run.seed, run.fold);
    fs::create_directories(rd);
    if (!run.outcome) {
      write(rd / "error.txt", run.error + "\n");
      continue;
    }
    const auto& o = *run.outcome;
    write(rd / "classifier.txt", export_text(o.classifier));
    write(rd / "classifier.json", export_json(o.classifier));
    write(rd / "archive.tsv", export_rules_tsv(o.archive));
    write(rd / "vocabulary.txt", serialize_vocabulary(o.vocabulary));
    write(rd / "evolution.jsonl", o.evolution_log);
  }
}

}  // namespace irecs
