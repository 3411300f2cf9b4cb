#pragma once

#include <map>
#include <string>
#include <vector>

#include "drum/kg.hpp"
#include "drum/model.hpp"

namespace drum::rules {

// A closed-chain Horn rule: body atoms are relation ids (never the
// identity), head is a relation id, confidence is nonnegative.
struct Rule {
    int head = -1;
    std::vector<int> body;
    double confidence = 0.0;
};

// Per-head rule lists sorted by descending confidence, ties broken by
// lexicographic body order. Duplicate bodies are merged by summing.
struct RuleList {
    std::map<int, std::vector<Rule>> by_head;
    // rules from a rule file whose relations are absent from the current
    // vocabulary; they contribute zero and are reported once
    std::vector<std::string> unresolved;

    std::size_t rule_count() const;
};

// A raw length-T path over operator slots (0 = identity) with the product
// of its per-step coefficients.
struct RawPath {
    std::vector<int> slots;
    double confidence = 0.0;
};

// Depth-first expansion of one rank slice with partial-product pruning:
// a prefix whose product falls below min_confidence is abandoned (products
// cannot grow since every coefficient is <= 1). Paths are emitted in
// lexicographic slot order. min_confidence <= 0 explodes combinatorially
// and is refused for large K^T unless allow_exhaustive is set.
std::vector<RawPath> expand_rank(const model::CoefficientTensor& coeffs, int rank, double min_confidence,
                                 bool allow_exhaustive = false);

// Drops identity slots, mapping the rest to relation ids; an all-identity
// path collapses to an empty body (callers discard those).
std::vector<int> collapse_identity(const std::vector<int>& slots);

// max(1e-4, 0.01 * top raw-path confidence over all ranks).
double default_min_confidence(const model::CoefficientTensor& coeffs);

// Union of expand_rank over all ranks, identity-collapsed, merged by body
// with confidences summed, sorted descending.
std::vector<Rule> extract_rules(const model::CoefficientTensor& coeffs, int head, double min_confidence,
                                bool allow_exhaustive = false);
std::vector<Rule> extract_rules(const model::CoefficientTensor& coeffs, int head);

// Inverse direction: one rank per rule with step-one scaled by the
// confidence, body steps one-hot, identity padding to length T. Requires
// confidences in [0, 1] and body lengths in [1, T].
model::CoefficientTensor construct_coefficients(const std::vector<Rule>& rules, int max_rule_length,
                                                int operator_count);

double path_confidence(const model::CoefficientTensor& coeffs, int rank, const std::vector<int>& slots);

// Number of mismatched positions between two equal-length paths.
int path_distance(const std::vector<int>& a, const std::vector<int>& b);

// The stepwise-replacement chain from the rank-1 expressiveness argument:
// interior paths between path_o and path_s obtained by replacing atoms one
// position at a time (highest step first) toward the per-step argmax path.
// Every interior confidence is >= min of the endpoint confidences and
// consecutive paths differ in exactly one atom.
std::vector<RawPath> theorem1_chain(const model::CoefficientTensor& rank1, const std::vector<int>& path_o,
                                    const std::vector<int>& path_s);

// One rule per line: `confidence\thead(A, B) <- b1(A, z1), b2(z1, B)` with
// 6-decimal confidence, heads introduced by `# head: <name>` comments.
void save_rules(const std::string& path, const RuleList& rules, const kg::Vocabulary& vocab);
RuleList load_rules(const std::string& path, const kg::Vocabulary& vocab);

std::string format_rule(const Rule& rule, const kg::Vocabulary& vocab);

} // namespace drum::rules
