#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "drum/errors.hpp"

namespace drum::kg {

struct Triple {
    int s = 0;
    int r = 0;
    int o = 0;
    friend bool operator==(const Triple&, const Triple&) = default;
};

// Bidirectional name<->index maps for entities and relations. Relation
// indices are dense: originals first, then (after augmentation) one inverse
// per original, then a single synthetic identity relation.
class Vocabulary {
public:
    int entity(const std::string& name);              // interns
    int relation(const std::string& name);            // interns
    std::optional<int> entity_id(const std::string& name) const;
    std::optional<int> relation_id(const std::string& name) const;
    const std::string& entity_name(int id) const;
    const std::string& relation_name(int id) const;

    int entity_count() const { return static_cast<int>(entity_names_.size()); }
    int relation_count() const { return static_cast<int>(relation_names_.size()); }

    bool augmented() const { return identity_id_ >= 0; }
    // Number of relations present before augmentation.
    int original_relation_count() const { return augmented() ? original_count_ : relation_count(); }
    int identity_id() const { return identity_id_; }
    bool is_inverse(int rel) const { return augmented() && rel >= original_count_ && rel < 2 * original_count_; }
    bool is_identity(int rel) const { return rel == identity_id_ && identity_id_ >= 0; }
    // inverse of an original is its inv_ twin and vice versa; identity has none
    int inverse_of(int rel) const;

    // Called by augment_relations: adds inv_<name> twins and the identity slot.
    void augment();

    std::uint64_t content_hash() const;

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    std::vector<std::string> entity_names_;
    std::unordered_map<std::string, int> entity_ids_;
    std::vector<std::string> relation_names_;
    std::unordered_map<std::string, int> relation_ids_;
    int original_count_ = -1;
    int identity_id_ = -1;
};

// Deduplicated integer triples plus the entity/relation counts they index.
struct TripleStore {
    std::vector<Triple> triples;
    int entity_count = 0;
    int relation_count = 0;

    std::size_t size() const { return triples.size(); }
    bool contains(const Triple& t) const;
    void add_unique(const Triple& t);  // no-op on duplicates
    std::vector<int> entities() const; // sorted distinct entity ids used
};

struct LoadResult {
    TripleStore store;
    std::size_t duplicates_dropped = 0;
};

// Parse a tab-separated "subject\trelation\tobject" file, interning names
// into vocab (which may already hold entries; unknown names extend it).
LoadResult load_triples(const std::string& path, Vocabulary& vocab);

// In-memory variant used by generators and tests.
LoadResult load_triples_from_lines(const std::vector<std::string>& lines, Vocabulary& vocab,
                                   const std::string& origin = "<memory>");

void save_triples(const std::string& path, const TripleStore& store, const Vocabulary& vocab);

// For each (s,r,o) adds (o, inv_r, s); allocates the identity relation slot
// on first use (several stores sharing one vocabulary can each be augmented).
// No identity triples are stored; its adjacency is synthesized on demand.
TripleStore augment_relations(const TripleStore& store, Vocabulary& vocab);

// Binary adjacency of one relation stored as sorted unique (row, col) pairs.
struct SparseAdjacency {
    int n = 0;
    std::vector<int> rows;
    std::vector<int> cols;

    std::size_t nnz() const { return rows.size(); }
    SparseAdjacency transposed() const;
    friend bool operator==(const SparseAdjacency&, const SparseAdjacency&) = default;
};

// Entry (i,j)=1 iff (i, rel, j) in store; the identity relation yields I_n.
SparseAdjacency build_adjacency(const TripleStore& store, const Vocabulary& vocab, int rel);

// Operator slots as consumed by the scoring recurrence: slot 0 is the
// identity, slot k (k>=1) is relation k-1. Requires an augmented vocabulary.
std::vector<SparseAdjacency> build_operator_slots(const TripleStore& store, const Vocabulary& vocab);

inline int slot_of_relation(int rel) { return rel + 1; }
inline int relation_of_slot(int slot) { return slot - 1; } // slot 0 = identity -> -1

// Seeded-shuffle then prefix-cut partition; ratio is facts:train odds
// (3 means 3:1). Returns {facts, train}.
std::pair<TripleStore, TripleStore> split_facts_train(const TripleStore& store, double ratio,
                                                      std::uint64_t seed);

// Drop every training triple that touches an entity present in test.
TripleStore make_inductive_split(const TripleStore& train, const TripleStore& test);

} // namespace drum::kg
