#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "uwdiff/random.hpp"
#include "uwdiff/schedule.hpp"

namespace uwdiff {

struct PopulationEntry {
    SamplingSequence genes;
    double score;
};

struct EAConfig {
    int gene_length = 11;
    double crossover_prob = 0.5;
    double mutation_prob = 0.1;
    int epochs = 50;
    int capacity = 10;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Higher is better. Exceptions propagate out of the search.
using FitnessFn = std::function<double(const SamplingSequence&)>;

/// Fixed-capacity elitist queue, sorted by score descending. Genes are
/// unique; among equal scores the earlier entry ranks first.
class Population {
public:
    explicit Population(std::size_t capacity);

    /// Inserts the candidate if it ranks among the best `capacity` entries
    /// and its genes are not already present. Returns whether it was kept.
    bool offer(PopulationEntry candidate);

    bool contains(const SamplingSequence& genes) const;
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t capacity() const { return capacity_; }
    const PopulationEntry& best() const { return entries_.front(); }
    const std::vector<PopulationEntry>& entries() const { return entries_; }
    const PopulationEntry& operator[](std::size_t i) const { return entries_[i]; }

private:
    std::size_t capacity_;
    std::vector<PopulationEntry> entries_;
};

/// One row of the search log.
struct ScoredCandidate {
    int epoch;
    std::vector<int> genes;
    double score;
};

struct SearchResult {
    PopulationEntry best;
    std::vector<double> best_score_per_epoch;  // index 0 = after initialization
    std::size_t evaluations = 0;
};

/// Evolutionary search over sampling sequences. Endpoints T and 0 are fixed
/// genes; illegal offspring are dropped before scoring; each distinct
/// sequence is scored at most once.
class EvolutionarySearch {
public:
    using Logger = std::function<void(const ScoredCandidate&)>;

    EvolutionarySearch(EAConfig config, int total_steps, FitnessFn fitness, Logger logger = {});

    /// Scores `capacity` random descending genes and fills the queue.
    void random_init();
    /// Uniform crossover of two distinct queue members.
    void crossover();
    /// Point mutation of one queue member's interior genes.
    void mutation();

    /// random_init followed by `epochs` rounds of mutation then crossover.
    SearchResult run();

    const Population& population() const { return population_; }
    const EAConfig& config() const { return config_; }
    std::size_t evaluations() const { return scores_.size(); }

private:
    std::vector<int> random_genes();
    /// Scores legal, unseen genes and offers them to the queue.
    void consider(std::vector<int> genes);

    EAConfig config_;
    int total_steps_;
    FitnessFn fitness_;
    Logger logger_;
    Rng rng_;
    Population population_;
    std::map<std::vector<int>, double> scores_;
    int epoch_ = 0;
};

SamplingSequence search(const EAConfig& config, int total_steps, const FitnessFn& fitness,
                        const EvolutionarySearch::Logger& logger = {});

/// "2000;1500;...;0" form used inside the comma-separated search log.
std::string genes_to_log_string(const std::vector<int>& genes);

}  // namespace uwdiff
