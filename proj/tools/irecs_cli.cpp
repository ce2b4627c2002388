// irecs command-line front end.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "irecs/classifier.hpp"
#include "irecs/enrich.hpp"
#include "irecs/experiment.hpp"
#include "irecs/scopus.hpp"

using namespace irecs;
namespace fs = std::filesystem;

namespace {

constexpr int kUsage = 2;
constexpr int kFailure = 1;

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

/// Options layered over a RunConfig: config file first, then only the flags
/// given on the command line.
class RunOptions {
 public:
  explicit RunOptions(CLI::App* app, bool experiment) {
    app->add_option("--config", config_path_, "JSON config file; command-line flags take precedence")
        ->check(CLI::ExistingFile);
    bind(app->add_option("--dataset", v_.dataset_path, "Labelled dataset CSV")->check(CLI::ExistingFile),
         [](RunConfig& c, const RunConfig& v) { c.dataset_path = v.dataset_path; });
    bind(app->add_option("--max-gen", v_.evolve.max_generations, "Generations per evolution run (100)"),
         [](RunConfig& c, const RunConfig& v) { c.evolve.max_generations = v.evolve.max_generations; });
    bind(app->add_option("--pop-size", v_.evolve.population_size, "Population size (100)"),
         [](RunConfig& c, const RunConfig& v) { c.evolve.population_size = v.evolve.population_size; });
    bind(app->add_option("--cross-prob", v_.evolve.crossover_prob, "Crossover probability (0.9)"),
         [](RunConfig& c, const RunConfig& v) { c.evolve.crossover_prob = v.evolve.crossover_prob; });
    bind(app->add_option("--mut-prob", v_.evolve.mutation_prob, "Mutation probability (0.1)"),
         [](RunConfig& c, const RunConfig& v) { c.evolve.mutation_prob = v.evolve.mutation_prob; });
    bind(app->add_option("--max-derivations", v_.evolve.max_derivations, "Derivation budget per tree (15)"),
         [](RunConfig& c, const RunConfig& v) { c.evolve.max_derivations = v.evolve.max_derivations; });
    bind(app->add_option("--replacement", replacement_, "NPOP, ELIT or PGEN (NPOP)"),
         [this](RunConfig& c, const RunConfig&) { c.evolve.replacement = *parse_replacement(replacement_); });
    bind(app->add_option("--threshold", v_.evolve.archive_threshold, "Minimum fitness for the rule archive (0.2)"),
         [](RunConfig& c, const RunConfig& v) { c.evolve.archive_threshold = v.evolve.archive_threshold; });
    bind(app->add_option("--workers", v_.evolve.workers, "Fitness evaluation threads (1)"),
         [](RunConfig& c, const RunConfig& v) { c.evolve.workers = v.evolve.workers; });
    bind(app->add_option("--strategy", strategy_, "CBA, CMAR, CPAR or SCBA (SCBA)"),
         [this](RunConfig& c, const RunConfig&) { c.strategy = *parse_strategy(strategy_); });
    bind(app->add_option("--top-k", v_.top_k, "Stems kept per class vocabulary (100)"),
         [](RunConfig& c, const RunConfig& v) { c.top_k = v.top_k; });
    bind(app->add_option("--vocabulary", v_.vocabulary_path, "User vocabulary file (one stem per line)")
             ->check(CLI::ExistingFile),
         [](RunConfig& c, const RunConfig& v) { c.vocabulary_path = v.vocabulary_path; });
    bind(app->add_option("--grammar", v_.grammar_path, "Grammar file (bundled grammar by default)")->check(CLI::ExistingFile),
         [](RunConfig& c, const RunConfig& v) { c.grammar_path = v.grammar_path; });
    bind(app->add_option("--terminals", v_.terminals_path, "Terminal configuration XML")->check(CLI::ExistingFile),
         [](RunConfig& c, const RunConfig& v) { c.terminals_path = v.terminals_path; });
    bind(app->add_flag("--no-biblio", no_biblio_, "Drop year, nCites, nAuthors and paperType from the grammar"),
         [this](RunConfig& c, const RunConfig&) { c.use_bibliometrics = !no_biblio_; });
    bind(app->add_option("--enrich-cache", v_.enrich_cache_path, "Fill missing bibliometrics from this cache first"),
         [](RunConfig& c, const RunConfig& v) { c.enrich_cache_path = v.enrich_cache_path; });
    bind(app->add_option("--overrides", v_.overrides_path, "Manual bibliometric overrides CSV")->check(CLI::ExistingFile),
         [](RunConfig& c, const RunConfig& v) { c.overrides_path = v.overrides_path; });
    if (experiment) {
      bind(app->add_option("--seeds", seed_count_, "Run seeds 1..N (10)")->check(CLI::PositiveNumber),
           [this](RunConfig& c, const RunConfig&) {
             c.seeds.clear();
             for (std::uint64_t s = 1; s <= seed_count_; ++s) c.seeds.push_back(s);
           });
      bind(app->add_option("--seed-list", seed_list_, "Explicit seeds, e.g. 3,5,8")->delimiter(','),
           [this](RunConfig& c, const RunConfig&) { c.seeds = seed_list_; });
      bind(app->add_option("--folds", v_.folds, "Cross-validation folds (5)"),
           [](RunConfig& c, const RunConfig& v) { c.folds = v.folds; });
      bind(app->add_option("--jobs", v_.jobs, "Seed x fold runs in parallel (1)"),
           [](RunConfig& c, const RunConfig& v) { c.jobs = v.jobs; });
      bind(app->add_option("--output-dir", v_.output_dir, "Report directory"),
           [](RunConfig& c, const RunConfig& v) { c.output_dir = v.output_dir; });
    }
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!config_path_.empty()) {
      try {
        apply_json(c, nlohmann::json::parse(read_file(config_path_)));
      } catch (const nlohmann::json::exception& e) {
        throw ParameterError(config_path_ + ": " + e.what());
      }
    }
    if (!replacement_.empty() && !parse_replacement(replacement_)) throw ParameterError("unknown replacement '" + replacement_ + "'");
    if (!strategy_.empty() && !parse_strategy(strategy_)) throw ParameterError("unknown strategy '" + strategy_ + "'");
    for (const auto& [opt, apply] : bindings_) {
      if (opt->count() > 0) apply(c, v_);
    }
    if (c.dataset_path.empty()) throw ParameterError("--dataset is required (flag or config file)");
    c.validate();
    return c;
  }

 private:
  using Apply = std::function<void(RunConfig&, const RunConfig&)>;
  void bind(CLI::Option* opt, Apply apply) { bindings_.emplace_back(opt, std::move(apply)); }

  RunConfig v_;
  std::string config_path_, replacement_, strategy_;
  bool no_biblio_ = false;
  std::uint64_t seed_count_ = 10;
  std::vector<std::uint64_t> seed_list_;
  std::vector<std::pair<CLI::Option*, Apply>> bindings_;
};

struct Mined {
  Dataset dataset;
  StemCache stems;
  std::vector<std::size_t> rows;
  EvolutionResult evolution;
  std::string log;
};

/// One evolution run on every record of the dataset.
Mined mine_all(const RunConfig& config, std::uint64_t seed) {
  Mined m;
  m.dataset = load_run_dataset(config);
  m.stems = stem_cache(m.dataset);
  for (std::size_t i = 0; i < m.dataset.size(); ++i) m.rows.push_back(i);
  const auto vocab = config.vocabulary_path.empty() ? training_vocabulary(m.dataset, m.rows, config.top_k)
                                                    : load_vocabulary(config.vocabulary_path);
  const auto spec = prepare_grammar(load_grammar(config.grammar_path, config.terminals_path), m.dataset, m.rows, vocab,
                                    config.use_bibliometrics);
  const CoverageIndex index(m.dataset, m.stems, m.rows);
  auto ec = config.evolve;
  ec.seed = seed;
  std::ostringstream log;
  m.evolution = run_evolution(index, spec, ec, &log);
  m.log = log.str();
  return m;
}

RuleClassifier load_classifier(const std::string& path) {
  const auto text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return import_json(text);
  return import_text(text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"irecs: evolve screening rules for systematic-review candidate papers"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // enrich
  auto* enrich = app.add_subcommand("enrich", "Fill missing bibliometric fields from a DOI provider");
  std::string en_in, en_out, en_cache, en_overrides, en_provider = "none", en_stub, en_url = "https://api.elsevier.com",
                                                     en_report;
  std::size_t en_parallel = 4;
  int en_timeout = 20;
  enrich->add_option("--dataset", en_in, "Input dataset CSV")->required()->check(CLI::ExistingFile);
  enrich->add_option("--output", en_out, "Enriched dataset CSV")->required();
  enrich->add_option("--cache", en_cache, "JSON-lines lookup cache (created if missing)");
  enrich->add_option("--overrides", en_overrides, "Manual overrides CSV (doi,year,n_cites,n_authors,paper_type)")
      ->check(CLI::ExistingFile);
  enrich->add_option("--provider", en_provider, "none, stub or scopus")->check(CLI::IsMember({"none", "stub", "scopus"}));
  enrich->add_option("--stub-file", en_stub, "Records for the stub provider (JSON)")->check(CLI::ExistingFile);
  enrich->add_option("--scopus-url", en_url, "Base URL of the abstract-retrieval API; key from IRECS_SCOPUS_API_KEY");
  enrich->add_option("--parallelism", en_parallel, "Concurrent lookups")->check(CLI::PositiveNumber);
  enrich->add_option("--timeout", en_timeout, "Request timeout in seconds")->check(CLI::PositiveNumber);
  enrich->add_option("--report", en_report, "Write the enrichment report as JSON");

  // vocab
  auto* vocab = app.add_subcommand("vocab", "Write positive, negative and relevant vocabularies");
  std::string vo_in, vo_dir;
  std::size_t vo_k = 100;
  vocab->add_option("--dataset", vo_in, "Labelled dataset CSV")->required()->check(CLI::ExistingFile);
  vocab->add_option("--top-k", vo_k, "Stems kept per class")->check(CLI::PositiveNumber);
  vocab->add_option("--output-dir", vo_dir, "Directory for positive.txt, negative.txt, relevant.txt (else relevant to stdout)");

  // mine
  auto* mine = app.add_subcommand("mine", "Run one evolution on the whole dataset and export the rule archive");
  RunOptions mine_opts(mine, false);
  std::uint64_t mine_seed = 1;
  std::string mine_out, mine_log;
  mine->add_option("--seed", mine_seed, "Random seed");
  mine->add_option("--output", mine_out, "Archive TSV (stdout if omitted)");
  mine->add_option("--log", mine_log, "Per-generation JSON lines");

  // classify
  auto* classify = app.add_subcommand("classify", "Build a classifier, or apply one with --model");
  RunOptions cl_opts(classify, false);
  std::uint64_t cl_seed = 1;
  std::string cl_model, cl_input, cl_out, cl_text;
  classify->add_option("--seed", cl_seed, "Random seed when building");
  classify->add_option("--model", cl_model, "Existing classifier (JSON or text) to apply")->check(CLI::ExistingFile);
  classify->add_option("--input", cl_input, "Records to label with --model")->check(CLI::ExistingFile);
  classify->add_option("--output", cl_out, "Built classifier JSON, or predictions CSV with --model (stdout if omitted)");
  classify->add_option("--text", cl_text, "Also write the built classifier as a text listing");

  // eval
  auto* eval = app.add_subcommand("eval", "Cross-validated experiment over seeds x folds");
  RunOptions ev_opts(eval, true);

  // stats
  auto* stats = app.add_subcommand("stats", "Rule statistics from an exported classifier and archive");
  std::string st_model, st_archive;
  stats->add_option("--model", st_model, "Classifier (JSON or text)")->required()->check(CLI::ExistingFile);
  stats->add_option("--archive", st_archive, "Archive TSV with every generated rule")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*enrich) {
      BiblioCache cache = en_cache.empty() ? BiblioCache() : BiblioCache(en_cache);
      const auto overrides = en_overrides.empty() ? std::map<std::string, BiblioRecord>{} : parse_overrides(read_file(en_overrides));
      std::unique_ptr<Provider> provider;
      if (en_provider == "stub") {
        if (en_stub.empty()) throw ParameterError("--provider stub needs --stub-file");
        provider = StubProvider::from_file(en_stub);
      } else if (en_provider == "scopus") {
        provider = std::make_unique<ScopusProvider>(ScopusProvider::Options{en_url, "", en_timeout});
      }
      EnrichReport report;
      const auto out = enrich_dataset(load_dataset(en_in), provider.get(), cache, overrides, {en_parallel}, &report);
      save_dataset(out, en_out);
      if (!en_report.empty()) write_text(en_report, to_json(report).dump(2) + "\n");
      std::cerr << "enriched " << report.candidates << " candidate records: " << report.filled_fields << " fields filled, "
                << report.failures.size() << " lookup failures\n";
      for (const auto& f : report.failures) {
        std::cerr << "  " << f.record_id << " (" << f.doi << "): " << to_string(f.kind) << ": " << f.message << '\n';
      }
      return 0;
    }

    if (*vocab) {
      const auto d = load_dataset(vo_in);
      const auto pos = class_vocabulary(d, true, vo_k);
      const auto neg = class_vocabulary(d, false, vo_k);
      const auto rel = relevant_vocabulary(pos, neg);
      if (vo_dir.empty()) {
        std::cout << serialize_vocabulary(rel);
      } else {
        write_text((fs::path(vo_dir) / "positive.txt").string(), serialize_vocabulary(pos));
        write_text((fs::path(vo_dir) / "negative.txt").string(), serialize_vocabulary(neg));
        write_text((fs::path(vo_dir) / "relevant.txt").string(), serialize_vocabulary(rel));
      }
      return 0;
    }

    if (*mine) {
      const auto config = mine_opts.resolve();
      const auto m = mine_all(config, mine_seed);
      if (!mine_log.empty()) write_text(mine_log, m.log);
      write_text(mine_out, export_rules_tsv(m.evolution.rules));
      return 0;
    }

    if (*classify) {
      if (!cl_model.empty()) {
        if (cl_input.empty()) throw ParameterError("--model needs --input");
        const auto model = load_classifier(cl_model);
        const auto d = load_dataset(cl_input, DatasetFormat::csv, LoadOptions{.require_label = false});
        std::string out = "id,prediction\n";
        for (const auto& r : d.records()) out += csv::quote(r.id) + (predict(model, r) ? ",True\n" : ",False\n");
        write_text(cl_out, out);
        return 0;
      }
      const auto config = cl_opts.resolve();
      const auto m = mine_all(config, cl_seed);
      const CoverageIndex index(m.dataset, m.stems, m.rows);
      const auto model = build_classifier(m.evolution.rules, index, config.strategy);
      write_text(cl_out, export_json(model));
      if (!cl_text.empty()) write_text(cl_text, export_text(model));
      return 0;
    }

    if (*eval) {
      const auto config = ev_opts.resolve();
      const auto dataset = load_run_dataset(config);
      const auto result = run_experiment(dataset, config);
      if (!config.output_dir.empty()) write_reports(result, config, config.output_dir);
      const auto agg = aggregate_json(result, config);
      std::cout << agg["metrics"].dump(2) << '\n';
      if (result.failures() > 0) {
        std::cerr << result.failures() << " of " << result.runs.size() << " runs failed\n";
        for (const auto& run : result.runs) {
          if (!run.outcome) std::cerr << "  seed " << run.seed << " fold " << run.fold << ": " << run.error << '\n';
        }
        return kFailure;
      }
      return 0;
    }

    if (*stats) {
      const auto model = load_classifier(st_model);
      const auto generated = st_archive.empty() ? model.rules : import_rules_tsv(read_file(st_archive));
      std::cout << to_json(rule_stats(model, generated)).dump(2) << '\n';
      return 0;
    }
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
