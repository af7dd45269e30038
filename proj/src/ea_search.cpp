#include "uwdiff/ea_search.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace uwdiff {

void EAConfig::validate() const {
    if (gene_length < 2) throw std::invalid_argument("gene length must be >= 2");
    if (!(crossover_prob >= 0.0 && crossover_prob <= 1.0)) throw std::invalid_argument("pc must lie in [0, 1]");
    if (!(mutation_prob >= 0.0 && mutation_prob <= 1.0)) throw std::invalid_argument("pm must lie in [0, 1]");
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (capacity < 2) throw std::invalid_argument("queue capacity must be >= 2");
}

Population::Population(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("population capacity must be positive");
}

bool Population::contains(const SamplingSequence& genes) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const PopulationEntry& e) { return e.genes == genes; });
}

bool Population::offer(PopulationEntry candidate) {
    if (std::isnan(candidate.score)) throw std::invalid_argument("fitness returned NaN");
    if (contains(candidate.genes)) return false;
    auto pos = std::find_if(entries_.begin(), entries_.end(),
                            [&](const PopulationEntry& e) { return e.score < candidate.score; });
    if (pos == entries_.end() && entries_.size() >= capacity_) return false;
    entries_.insert(pos, std::move(candidate));
    if (entries_.size() > capacity_) entries_.pop_back();
    return true;
}

EvolutionarySearch::EvolutionarySearch(EAConfig config, int total_steps, FitnessFn fitness, Logger logger)
    : config_(config),
      total_steps_(total_steps),
      fitness_(std::move(fitness)),
      logger_(std::move(logger)),
      rng_(config.seed),
      population_(static_cast<std::size_t>(std::max(config.capacity, 1))) {
    config_.validate();
    if (total_steps_ < config_.gene_length) {
        throw std::invalid_argument("T must be at least the gene length");
    }
    if (!fitness_) throw std::invalid_argument("fitness callback required");
}

std::vector<int> EvolutionarySearch::random_genes() {
    const int interior = config_.gene_length - 2;
    std::uniform_int_distribution<int> draw(1, total_steps_ - 1);
    std::set<int> picked;
    while (static_cast<int>(picked.size()) < interior) picked.insert(draw(rng_));
    std::vector<int> genes;
    genes.reserve(static_cast<std::size_t>(config_.gene_length));
    genes.push_back(total_steps_);
    genes.insert(genes.end(), picked.rbegin(), picked.rend());
    genes.push_back(0);
    return genes;
}

void EvolutionarySearch::consider(std::vector<int> genes) {
    if (!validate_sequence(genes, total_steps_)) return;
    if (scores_.contains(genes)) return;
    SamplingSequence seq(genes, total_steps_);
    const double score = fitness_(seq);
    if (std::isnan(score)) throw std::runtime_error("fitness returned NaN for " + seq.to_string());
    scores_.emplace(genes, score);
    if (logger_) logger_(ScoredCandidate{epoch_, genes, score});
    population_.offer(PopulationEntry{std::move(seq), score});
}

void EvolutionarySearch::random_init() {
    epoch_ = 0;
    // Short genes over small T may not admit `capacity` distinct sequences.
    const int attempts = 20 * config_.capacity;
    int produced = 0;
    for (int a = 0; a < attempts && produced < config_.capacity; ++a) {
        std::vector<int> genes = random_genes();
        if (scores_.contains(genes)) continue;
        consider(std::move(genes));
        ++produced;
    }
}

void EvolutionarySearch::crossover() {
    if (population_.size() < 2) return;
    std::uniform_int_distribution<std::size_t> pick(0, population_.size() - 1);
    const std::size_t fi = pick(rng_);
    std::size_t mi = pick(rng_);
    while (mi == fi) mi = pick(rng_);
    const auto father = population_[fi].genes.steps();
    const auto mother = population_[mi].genes.steps();

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<int> child(father.size());
    for (std::size_t i = 0; i < child.size(); ++i) {
        const double p = unit(rng_);
        child[i] = p > config_.crossover_prob ? father[i] : mother[i];
    }
    consider(std::move(child));
}

void EvolutionarySearch::mutation() {
    if (population_.empty()) return;
    std::uniform_int_distribution<std::size_t> pick(0, population_.size() - 1);
    const auto parent = population_[pick(rng_)].genes.steps();
    std::vector<int> genes(parent.begin(), parent.end());

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> draw(1, total_steps_ - 1);
    bool changed = false;
    for (std::size_t i = 1; i + 1 < genes.size(); ++i) {
        if (unit(rng_) < config_.mutation_prob) {
            const int value = draw(rng_);
            changed = changed || value != genes[i];
            genes[i] = value;
        }
    }
    if (changed) consider(std::move(genes));
}

SearchResult EvolutionarySearch::run() {
    random_init();
    if (population_.empty()) throw std::runtime_error("initialization produced no legal genes");
    SearchResult result{population_.best(), {population_.best().score}, 0};
    for (int e = 1; e <= config_.epochs; ++e) {
        epoch_ = e;
        mutation();
        crossover();
        result.best_score_per_epoch.push_back(population_.best().score);
    }
    result.best = population_.best();
    result.evaluations = scores_.size();
    return result;
}

SamplingSequence search(const EAConfig& config, int total_steps, const FitnessFn& fitness,
                        const EvolutionarySearch::Logger& logger) {
    EvolutionarySearch ea(config, total_steps, fitness, logger);
    return ea.run().best.genes;
}

std::string genes_to_log_string(const std::vector<int>& genes) {
    std::string out;
    for (std::size_t i = 0; i < genes.size(); ++i) {
        if (i) out += ';';
        out += std::to_string(genes[i]);
    }
    return out;
}

}  // namespace uwdiff
