#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace drum::synth {

// A generated benchmark: raw training triples plus a held-out test file.
// Generators are deterministic in the seed and calibrated to fixed totals.
struct Dataset {
    std::vector<std::array<std::string, 3>> train;
    std::vector<std::array<std::string, 3>> test;

    std::size_t total() const { return train.size() + test.size(); }
};

// Multi-generation family trees over 12 kinship relations.
// Exactly 28356 triples (train+test) over 3007 people.
Dataset gen_family(std::uint64_t seed);

// Typed-concept network: 46 relations over 135 concepts arranged in
// disjoint concept groups, with relations defined as block links,
// compositions of other relations, two-composition unions (which need a
// rank greater than one to represent), and near-synonym copies.
// Exactly 5960 triples.
Dataset gen_umls_like(std::uint64_t seed);

// Section-system kinship terms: every ordered pair of 104 people carries
// one of 25 terms determined by section and gender; a fixed fraction of
// pairs is withheld. Exactly 9587 triples.
Dataset gen_kinship_like(std::uint64_t seed);

// WordNet-style lexical graph: hypernym forest with paired inverse
// relations and symmetric links, sized for desk-scale inductive runs.
Dataset gen_wn_like(std::uint64_t seed);

// Writes train.txt / test.txt under dir (created if missing).
void write_dataset(const std::string& dir, const Dataset& dataset);

} // namespace drum::synth
