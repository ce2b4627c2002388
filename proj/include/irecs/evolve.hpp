#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "irecs/common.hpp"
#include "irecs/grammar.hpp"
#include "irecs/rules.hpp"
#include "irecs/text.hpp"

namespace irecs {

enum class Replacement { npop, elit, pgen };

inline std::string_view to_string(Replacement r) {
  switch (r) {
    case Replacement::npop: return "NPOP";
    case Replacement::elit: return "ELIT";
    case Replacement::pgen: return "PGEN";
  }
  return "?";
}

inline std::optional<Replacement> parse_replacement(std::string_view s) {
  const auto u = to_lower(s);
  if (u == "npop") return Replacement::npop;
  if (u == "elit") return Replacement::elit;
  if (u == "pgen") return Replacement::pgen;
  return std::nullopt;
}

struct EvolveConfig {
  std::size_t max_generations = 100;
  std::size_t population_size = 100;
  double crossover_prob = 0.9;
  double mutation_prob = 0.1;
  std::size_t max_derivations = 15;
  Replacement replacement = Replacement::npop;
  double archive_threshold = 0.2;
  std::uint64_t seed = 0;
  std::size_t workers = 1;  // fitness evaluation threads; results do not depend on it

  void validate() const {
    if (max_generations < 1 || population_size < 1 || max_derivations < 1 || workers < 1) {
      throw ParameterError("evolve: counts must be >= 1");
    }
    if (!(crossover_prob >= 0.0 && crossover_prob <= 1.0)) throw ParameterError("evolve: crossover_prob outside [0,1]");
    if (!(mutation_prob >= 0.0 && mutation_prob <= 1.0)) throw ParameterError("evolve: mutation_prob outside [0,1]");
    // Thresholds above 1 are accepted; they simply admit no rule.
    if (!(archive_threshold >= -1.0) || !std::isfinite(archive_threshold)) {
      throw ParameterError("evolve: archive_threshold must be a finite value >= -1");
    }
  }
};

struct Individual {
  DerivationTree genotype;
  Rule rule;         // phenotype, measures cached after evaluation
  std::string text;  // rendered phenotype
  std::optional<double> fitness;

  explicit Individual(DerivationTree tree) : genotype(std::move(tree)) { refresh(); }

  /// Recomputes the phenotype after the genotype changed.
  void refresh() {
    rule = phenotype(genotype);
    text = render(rule);
    fitness.reset();
  }
};

using Population = std::vector<Individual>;

/// Strict total order used for selection and elitism: higher fitness, then
/// fewer conditions, then rendered text.
inline bool fitter(const Individual& a, const Individual& b) {
  const double fa = a.fitness.value_or(-2.0), fb = b.fitness.value_or(-2.0);
  if (fa != fb) return fa > fb;
  if (a.rule.length() != b.rule.length()) return a.rule.length() < b.rule.length();
  return a.text < b.text;
}

/// Memoized fitness over one training index, keyed by rendered phenotype.
class FitnessEvaluator {
 public:
  FitnessEvaluator(const CoverageIndex& index, std::size_t workers = 1) : index_(&index), workers_(std::max<std::size_t>(1, workers)) {
    if (index.positives() == 0 || index.negatives() == 0) {
      throw ParameterError("fitness: training data must contain both classes");
    }
  }

  void evaluate(Population& pop) {
    std::vector<const Individual*> todo;
    std::unordered_set<std::string> queued;
    for (const auto& ind : pop) {
      if (!memo_.contains(ind.text) && queued.insert(ind.text).second) todo.push_back(&ind);
    }
    std::vector<RuleMeasures> results(todo.size());
    auto work = [&](std::size_t begin, std::size_t step) {
      for (std::size_t i = begin; i < todo.size(); i += step) results[i] = index_->measures(todo[i]->rule);
    };
    const std::size_t n_threads = std::min(workers_, todo.size());
    if (n_threads <= 1) {
      work(0, 1);
    } else {
      std::vector<std::thread> threads;
      for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(work, t, n_threads);
      for (auto& th : threads) th.join();
    }
    for (std::size_t i = 0; i < todo.size(); ++i) memo_.emplace(todo[i]->text, results[i]);
    for (auto& ind : pop) {
      const auto& m = memo_.at(ind.text);
      ind.rule.measures = m;
      ind.fitness = m.fitness();
    }
    evaluations_ += todo.size();
  }

  std::size_t distinct_evaluations() const { return evaluations_; }

 private:
  const CoverageIndex* index_;
  std::size_t workers_;
  std::unordered_map<std::string, RuleMeasures> memo_;
  std::size_t evaluations_ = 0;
};

/// Best rules seen so far, unique by rendered phenotype, in insertion order.
class Archive {
 public:
  explicit Archive(double threshold) : threshold_(threshold) {}

  bool offer(const Individual& ind) {
    if (!ind.fitness || *ind.fitness < threshold_) return false;
    if (!seen_.insert(ind.text).second) return false;
    members_.push_back(ind);
    best_ = best_ ? std::max(*best_, *ind.fitness) : *ind.fitness;
    return true;
  }

  const std::vector<Individual>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }
  std::optional<double> best_fitness() const { return best_; }
  double threshold() const { return threshold_; }

  std::vector<Rule> rules() const {
    std::vector<Rule> out;
    out.reserve(members_.size());
    for (const auto& m : members_) out.push_back(m.rule);
    return out;
  }

 private:
  double threshold_;
  std::vector<Individual> members_;
  std::unordered_set<std::string> seen_;
  std::optional<double> best_;
};

inline Population init_population(const GrammarSpec& spec, const EvolveConfig& config, Rng& rng) {
  config.validate();
  Population pop;
  pop.reserve(config.population_size);
  for (std::size_t i = 0; i < config.population_size; ++i) {
    pop.emplace_back(random_derive(spec, spec.root, config.max_derivations, rng));
  }
  return pop;
}

/// Binary tournament with replacement; returns the winner's index.
inline std::size_t tournament_select(const Population& pop, Rng& rng) {
  if (pop.empty()) throw ParameterError("tournament_select: empty population");
  const auto a = uniform_index(rng, pop.size());
  const auto b = uniform_index(rng, pop.size());
  return fitter(pop[b], pop[a]) ? b : a;
}

namespace detail {

inline std::vector<DerivationTree*> internal_nodes(DerivationTree& t, const std::string& symbol) {
  std::vector<DerivationTree*> all, out;
  preorder(t, all);
  for (auto* n : all) {
    if (!n->is_leaf() && n->symbol == symbol) out.push_back(n);
  }
  return out;
}

inline std::size_t count_internal(const DerivationTree& t, const std::string& symbol) {
  std::size_t n = (!t.is_leaf() && t.symbol == symbol) ? 1 : 0;
  for (const auto& c : t.children) n += count_internal(c, symbol);
  return n;
}

inline std::set<std::string> internal_symbols(const DerivationTree& t) {
  std::vector<const DerivationTree*> all;
  preorder(t, all);
  std::set<std::string> out;
  for (auto* n : all) {
    if (!n->is_leaf()) out.insert(n->symbol);
  }
  return out;
}

}  // namespace detail

inline constexpr int kCrossoverAttempts = 5;

/// Swaps the `occurrence_a`-th `symbol` subtree of `a` (preorder) with the
/// `occurrence_b`-th one of `b`.
inline std::pair<DerivationTree, DerivationTree> exchange_subtrees(const DerivationTree& a, const DerivationTree& b,
                                                                   const std::string& symbol, std::size_t occurrence_a,
                                                                   std::size_t occurrence_b) {
  DerivationTree ca = a, cb = b;
  auto na = detail::internal_nodes(ca, symbol);
  auto nb = detail::internal_nodes(cb, symbol);
  if (occurrence_a >= na.size() || occurrence_b >= nb.size()) throw ParameterError("exchange_subtrees: no such node");
  std::swap(*na[occurrence_a], *nb[occurrence_b]);
  return {std::move(ca), std::move(cb)};
}

/// Subtree exchange at a shared non-terminal. Identical parents and pairs whose
/// offspring exceed the derivation budget after every attempt are returned
/// unchanged.
inline std::pair<DerivationTree, DerivationTree> crossover(const DerivationTree& a, const DerivationTree& b,
                                                           std::size_t max_derivations, Rng& rng) {
  if (a == b) return {a, b};
  const auto sa = detail::internal_symbols(a);
  const auto sb = detail::internal_symbols(b);
  std::vector<std::string> shared;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(shared));
  if (shared.empty()) return {a, b};

  for (int attempt = 0; attempt < kCrossoverAttempts; ++attempt) {
    const auto& symbol = shared[uniform_index(rng, shared.size())];
    const auto ia = uniform_index(rng, detail::count_internal(a, symbol));
    const auto ib = uniform_index(rng, detail::count_internal(b, symbol));
    auto children = exchange_subtrees(a, b, symbol, ia, ib);
    if (derivation_count(children.first) <= max_derivations && derivation_count(children.second) <= max_derivations) {
      return children;
    }
  }
  return {a, b};
}

/// Nodes mutation may act on, in preorder: non-terminals and value terminals.
inline std::vector<std::size_t> mutation_sites(const DerivationTree& tree, const GrammarSpec& spec) {
  std::vector<const DerivationTree*> all;
  preorder(tree, all);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!all[i]->is_leaf() || spec.config_for(all[i]->symbol)) out.push_back(i);
  }
  return out;
}

/// Mutates the node at preorder position `node`. A value terminal gets a
/// fresh value; a non-terminal is re-derived within the budget left by the
/// rest of the tree.
inline DerivationTree mutate_at(const DerivationTree& tree, std::size_t node, const GrammarSpec& spec,
                                std::size_t max_derivations, Rng& rng) {
  DerivationTree out = tree;
  std::vector<DerivationTree*> all;
  preorder(out, all);
  if (node >= all.size()) throw ParameterError("mutate_at: no such node");
  auto* target = all[node];
  if (target->is_leaf()) {
    const auto* cfg = spec.config_for(target->symbol);
    if (!cfg) throw ParameterError("mutate_at: " + target->symbol + " is not a value terminal");
    target->value = draw_value(*cfg, rng);
    return out;
  }
  const std::size_t rest = derivation_count(out) - derivation_count(*target);
  if (rest >= max_derivations) return out;
  *target = random_derive(spec, target->symbol, max_derivations - rest, rng);
  return out;
}

/// Mutation at one site chosen uniformly.
inline DerivationTree mutate(const DerivationTree& tree, const GrammarSpec& spec, std::size_t max_derivations, Rng& rng) {
  const auto sites = mutation_sites(tree, spec);
  if (sites.empty()) return tree;
  return mutate_at(tree, sites[uniform_index(rng, sites.size())], spec, max_derivations, rng);
}

inline Population replace(Population current, Population offspring, Replacement strategy, std::size_t population_size,
                          Rng& rng) {
  switch (strategy) {
    case Replacement::pgen:
      return offspring;
    case Replacement::elit: {
      Population merged = std::move(current);
      for (auto& o : offspring) merged.push_back(std::move(o));
      std::stable_sort(merged.begin(), merged.end(), fitter);
      if (merged.size() > population_size) merged.erase(merged.begin() + static_cast<std::ptrdiff_t>(population_size), merged.end());
      return merged;
    }
    case Replacement::npop: {
      Population merged = std::move(current);
      for (auto& o : offspring) merged.push_back(std::move(o));
      const std::size_t k = std::min(population_size, merged.size());
      for (std::size_t i = 0; i < k; ++i) std::swap(merged[i], merged[i + uniform_index(rng, merged.size() - i)]);
      merged.erase(merged.begin() + static_cast<std::ptrdiff_t>(k), merged.end());
      return merged;
    }
  }
  throw ParameterError("unknown replacement strategy");
}

struct GenerationStats {
  std::size_t generation = 0;
  double best = 0.0;
  double mean = 0.0;
  std::size_t archive_size = 0;
  std::optional<double> archive_best;
};

inline nlohmann::json to_json(const GenerationStats& s) {
  nlohmann::json j = {{"generation", s.generation}, {"best", s.best}, {"mean", s.mean}, {"archive_size", s.archive_size}};
  j["archive_best"] = s.archive_best ? nlohmann::json(*s.archive_best) : nlohmann::json(nullptr);
  return j;
}

struct EvolutionResult {
  std::vector<Rule> rules;  // archive contents with measures on the training data
  std::vector<GenerationStats> history;
  std::size_t distinct_evaluations = 0;
};

/// Observer invoked after each generation with the population just formed.
using GenerationHook = std::function<void(std::size_t generation, const Population&, const Archive&)>;

/// Generational loop over a bound, pruned grammar and a training index.
/// Progress lines (one JSON object per generation) go to `log` if given.
inline EvolutionResult run_evolution(const CoverageIndex& train, const GrammarSpec& spec, const EvolveConfig& config,
                                     std::ostream* log = nullptr, const GenerationHook& hook = {}) {
  config.validate();
  Rng rng(config.seed);
  FitnessEvaluator evaluator(train, config.workers);
  Archive archive(config.archive_threshold);
  EvolutionResult result;

  auto record = [&](std::size_t gen, const Population& pop) {
    GenerationStats s;
    s.generation = gen;
    s.best = -1.0;
    double sum = 0.0;
    for (const auto& ind : pop) {
      s.best = std::max(s.best, *ind.fitness);
      sum += *ind.fitness;
    }
    s.mean = sum / static_cast<double>(pop.size());
    s.archive_size = archive.size();
    s.archive_best = archive.best_fitness();
    if (log) *log << to_json(s).dump() << '\n';
    result.history.push_back(s);
    if (hook) hook(gen, pop, archive);
  };

  Population pop = init_population(spec, config, rng);
  evaluator.evaluate(pop);
  for (const auto& ind : pop) archive.offer(ind);
  record(0, pop);

  for (std::size_t gen = 1; gen <= config.max_generations; ++gen) {
    Population offspring;
    offspring.reserve(config.population_size);
    while (offspring.size() < config.population_size) {
      const auto& p1 = pop[tournament_select(pop, rng)];
      const auto& p2 = pop[tournament_select(pop, rng)];
      DerivationTree c1 = p1.genotype, c2 = p2.genotype;
      if (bernoulli(rng, config.crossover_prob)) std::tie(c1, c2) = crossover(c1, c2, config.max_derivations, rng);
      if (bernoulli(rng, config.mutation_prob)) c1 = mutate(c1, spec, config.max_derivations, rng);
      if (bernoulli(rng, config.mutation_prob)) c2 = mutate(c2, spec, config.max_derivations, rng);
      offspring.emplace_back(std::move(c1));
      if (offspring.size() < config.population_size) offspring.emplace_back(std::move(c2));
    }
    evaluator.evaluate(offspring);
    for (const auto& ind : offspring) archive.offer(ind);
    pop = replace(std::move(pop), std::move(offspring), config.replacement, config.population_size, rng);
    record(gen, pop);
  }

  result.rules = archive.rules();
  result.distinct_evaluations = evaluator.distinct_evaluations();
  if (result.rules.empty()) {
    warn("archive is empty: no rule reached fitness " + std::to_string(config.archive_threshold));
  }
  return result;
}

/// Grammar as used for one training split: unavailable fields pruned, value
/// terminals bound to the split's ranges and vocabulary. Text comparisons are
/// dropped when the vocabulary is empty; `use_bibliometrics = false` drops
/// year, nCites, nAuthors and paperType.
inline GrammarSpec prepare_grammar(const GrammarSpec& spec, const Dataset& dataset, const std::vector<std::size_t>& rows,
                                   const Vocabulary& vocabulary, bool use_bibliometrics = true) {
  std::set<Field> fields;
  if (!vocabulary.empty()) fields = {Field::title, Field::abstract};
  if (use_bibliometrics) {
    for (auto i : rows) {
      const auto& r = dataset[i];
      if (r.year) fields.insert(Field::year);
      if (r.n_cites) fields.insert(Field::nCites);
      if (r.n_authors) fields.insert(Field::nAuthors);
      if (r.paper_type) fields.insert(Field::paperType);
    }
  }
  return bind_terminals(prune_grammar(spec, fields), dataset, rows, vocabulary);
}

}  // namespace irecs
