#pragma once

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "drum/kg.hpp"
#include "drum/rules.hpp"

namespace drum::eval {

struct Metrics {
    double mrr = 0.0;
    double hits1 = 0.0;
    double hits3 = 0.0;
    double hits10 = 0.0;
    std::size_t query_count = 0;

    void validate() const; // hits1 <= hits3 <= hits10 and mrr >= hits1
    std::string record_line() const; // "mrr=... hits1=... hits3=... hits10=... n=..."
};

// Known-true tails per (entity, relation) over every split, both query
// directions. Immutable once finalized.
class FilterIndex {
public:
    // Adds (s,r)->o and (o,inv_r)->s for every triple. The store must hold
    // original-direction triples only; vocab must be augmented.
    void add_store(const kg::TripleStore& store, const kg::Vocabulary& vocab);
    void finalize(); // sort + dedup; required before lookups

    std::span<const int> known_tails(int entity, int relation) const;

private:
    static std::uint64_t key(int entity, int relation) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(entity)) << 32) |
               static_cast<std::uint32_t>(relation);
    }
    std::unordered_map<std::uint64_t, std::vector<int>> map_;
    bool finalized_ = false;
};

// Filtered rank with mean-rank tie handling: filtered candidates leave
// contention, rank = 1 + #strictly-greater + #ties/2. true_tail itself is
// never counted as a competitor even when present in filter.
double rank_query(std::span<const double> scores, int true_tail, std::span<const int> filter);

using Scorer = std::function<std::vector<double>(int x, int head)>;

struct EvalOptions {
    bool tail_only = false; // skip the inverse-direction query per triple
    int threads = 1;
};

// Each test triple contributes a tail query (s, r -> o) and, unless
// tail_only, a head query through the inverse relation (o, inv_r -> s).
// MRR = mean 1/rank, Hits@k = fraction of ranks <= k.
Metrics evaluate(const Scorer& scorer, const kg::TripleStore& test, const kg::Vocabulary& vocab,
                 const FilterIndex& filter, const EvalOptions& options = {});

// score(x) = sum over rules for head of alpha * (v_x^T prod_body A); purely
// symbolic, so it works over operators built from any entity vocabulary.
std::vector<double> apply_rules(const rules::RuleList& rules, int head,
                                std::span<const kg::SparseAdjacency> ops, int x);

// Scorer wrapper that reports (once) rules that could not be resolved
// against the evaluation vocabulary and skips them.
class RuleScorer {
public:
    RuleScorer(const rules::RuleList& rules, std::span<const kg::SparseAdjacency> ops,
               std::ostream* warn_to = nullptr);

    std::vector<double> operator()(int x, int head) const;

private:
    const rules::RuleList& rules_;
    std::span<const kg::SparseAdjacency> ops_;
};

} // namespace drum::eval
