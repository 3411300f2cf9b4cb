#include "drum/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <thread>

namespace drum::eval {

void Metrics::validate() const {
    if (hits1 > hits3 + 1e-12 || hits3 > hits10 + 1e-12)
        throw ContractError("Metrics: hits@k must be monotone in k");
    if (mrr + 1e-12 < hits1) throw ContractError("Metrics: mrr must be >= hits@1");
}

std::string Metrics::record_line() const {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "mrr=%.6f hits1=%.6f hits3=%.6f hits10=%.6f n=%zu", mrr, hits1, hits3,
                  hits10, query_count);
    return buf;
}

void FilterIndex::add_store(const kg::TripleStore& store, const kg::Vocabulary& vocab) {
    if (!vocab.augmented()) throw ContractError("FilterIndex: vocabulary must be augmented");
    if (finalized_) throw ContractError("FilterIndex: already finalized");
    for (const auto& t : store.triples) {
        map_[key(t.s, t.r)].push_back(t.o);
        map_[key(t.o, vocab.inverse_of(t.r))].push_back(t.s);
    }
}

void FilterIndex::finalize() {
    for (auto& [k, v] : map_) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    finalized_ = true;
}

std::span<const int> FilterIndex::known_tails(int entity, int relation) const {
    if (!finalized_) throw ContractError("FilterIndex: finalize before lookups");
    auto it = map_.find(key(entity, relation));
    if (it == map_.end()) return {};
    return it->second;
}

double rank_query(std::span<const double> scores, int true_tail, std::span<const int> filter) {
    if (true_tail < 0 || true_tail >= static_cast<int>(scores.size()))
        throw std::out_of_range("rank_query: true_tail " + std::to_string(true_tail));
    double target = scores[static_cast<std::size_t>(true_tail)];
    std::size_t greater = 0, ties = 0;
    for (int i = 0; i < static_cast<int>(scores.size()); ++i) {
        if (i == true_tail) continue;
        if (std::binary_search(filter.begin(), filter.end(), i)) continue;
        double s = scores[static_cast<std::size_t>(i)];
        if (s > target)
            ++greater;
        else if (s == target)
            ++ties;
    }
    return 1.0 + static_cast<double>(greater) + static_cast<double>(ties) / 2.0;
}

Metrics evaluate(const Scorer& scorer, const kg::TripleStore& test, const kg::Vocabulary& vocab,
                 const FilterIndex& filter, const EvalOptions& options) {
    if (test.triples.empty()) throw std::invalid_argument("evaluate: empty test store");
    if (!vocab.augmented()) throw ContractError("evaluate: vocabulary must be augmented");

    struct Query {
        int x, head, y;
    };
    std::vector<Query> queries;
    queries.reserve(test.triples.size() * (options.tail_only ? 1 : 2));
    for (const auto& t : test.triples) {
        queries.push_back(Query{t.s, t.r, t.o});
        if (!options.tail_only) queries.push_back(Query{t.o, vocab.inverse_of(t.r), t.s});
    }

    std::vector<double> ranks(queries.size(), 0.0);
    auto run_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t q = begin; q < end; ++q) {
            std::vector<double> scores = scorer(queries[q].x, queries[q].head);
            ranks[q] = rank_query(scores, queries[q].y, filter.known_tails(queries[q].x, queries[q].head));
        }
    };
    int threads = std::max(1, options.threads);
    if (threads == 1 || queries.size() < 2) {
        run_range(0, queries.size());
    } else {
        std::vector<std::thread> workers;
        std::size_t per = (queries.size() + static_cast<std::size_t>(threads) - 1) / static_cast<std::size_t>(threads);
        for (int w = 0; w < threads; ++w) {
            std::size_t begin = static_cast<std::size_t>(w) * per;
            std::size_t end = std::min(queries.size(), begin + per);
            if (begin >= end) break;
            workers.emplace_back(run_range, begin, end);
        }
        for (auto& t : workers) t.join();
    }

    Metrics m;
    m.query_count = ranks.size();
    for (double r : ranks) {
        m.mrr += 1.0 / r;
        m.hits1 += r <= 1.0;
        m.hits3 += r <= 3.0;
        m.hits10 += r <= 10.0;
    }
    auto n = static_cast<double>(ranks.size());
    m.mrr /= n;
    m.hits1 /= n;
    m.hits3 /= n;
    m.hits10 /= n;
    m.validate();
    return m;
}

std::vector<double> apply_rules(const rules::RuleList& rules, int head,
                                std::span<const kg::SparseAdjacency> ops, int x) {
    int n = ops.empty() ? 0 : ops[0].n;
    if (x < 0 || x >= n) throw std::out_of_range("apply_rules: entity " + std::to_string(x));
    std::vector<double> total(static_cast<std::size_t>(n), 0.0);
    auto it = rules.by_head.find(head);
    if (it == rules.by_head.end()) return total;
    std::vector<double> u, next(static_cast<std::size_t>(n));
    for (const rules::Rule& rule : it->second) {
        u.assign(static_cast<std::size_t>(n), 0.0);
        u[static_cast<std::size_t>(x)] = 1.0;
        bool ok = true;
        for (int rel : rule.body) {
            int slot = kg::slot_of_relation(rel);
            if (slot < 1 || slot >= static_cast<int>(ops.size())) {
                ok = false;
                break;
            }
            const auto& a = ops[static_cast<std::size_t>(slot)];
            std::fill(next.begin(), next.end(), 0.0);
            for (std::size_t e = 0; e < a.nnz(); ++e)
                next[static_cast<std::size_t>(a.cols[e])] += u[static_cast<std::size_t>(a.rows[e])];
            std::swap(u, next);
        }
        if (!ok) continue;
        for (std::size_t i = 0; i < total.size(); ++i) total[i] += rule.confidence * u[i];
    }
    return total;
}

RuleScorer::RuleScorer(const rules::RuleList& rules, std::span<const kg::SparseAdjacency> ops,
                       std::ostream* warn_to)
    : rules_(rules), ops_(ops) {
    if (warn_to && !rules_.unresolved.empty()) {
        *warn_to << "warning: " << rules_.unresolved.size()
                 << " rule(s) mention relations absent from this knowledge graph and will score zero:\n";
        for (const auto& r : rules_.unresolved) *warn_to << "  " << r << "\n";
    }
}

std::vector<double> RuleScorer::operator()(int x, int head) const { return apply_rules(rules_, head, ops_, x); }

} // namespace drum::eval
