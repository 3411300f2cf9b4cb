#include "drum/kg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "drum/rng.hpp"

namespace drum::kg {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const std::string& s) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

struct TripleHash {
    std::size_t operator()(const Triple& t) const {
        std::uint64_t h = 1469598103934665603ULL;
        h = (h ^ static_cast<std::uint64_t>(t.s)) * 1099511628211ULL;
        h = (h ^ static_cast<std::uint64_t>(t.r)) * 1099511628211ULL;
        h = (h ^ static_cast<std::uint64_t>(t.o)) * 1099511628211ULL;
        return static_cast<std::size_t>(h);
    }
};

} // namespace

int Vocabulary::entity(const std::string& name) {
    auto it = entity_ids_.find(name);
    if (it != entity_ids_.end()) return it->second;
    int id = static_cast<int>(entity_names_.size());
    entity_names_.push_back(name);
    entity_ids_.emplace(name, id);
    return id;
}

int Vocabulary::relation(const std::string& name) {
    auto it = relation_ids_.find(name);
    if (it != relation_ids_.end()) return it->second;
    if (augmented())
        throw ContractError("Vocabulary: cannot add relation '" + name + "' after augmentation");
    int id = static_cast<int>(relation_names_.size());
    relation_names_.push_back(name);
    relation_ids_.emplace(name, id);
    return id;
}

std::optional<int> Vocabulary::entity_id(const std::string& name) const {
    auto it = entity_ids_.find(name);
    if (it == entity_ids_.end()) return std::nullopt;
    return it->second;
}

std::optional<int> Vocabulary::relation_id(const std::string& name) const {
    auto it = relation_ids_.find(name);
    if (it == relation_ids_.end()) return std::nullopt;
    return it->second;
}

const std::string& Vocabulary::entity_name(int id) const {
    if (id < 0 || id >= entity_count()) throw std::out_of_range("Vocabulary: entity id " + std::to_string(id));
    return entity_names_[static_cast<std::size_t>(id)];
}

const std::string& Vocabulary::relation_name(int id) const {
    if (id < 0 || id >= relation_count())
        throw std::out_of_range("Vocabulary: relation id " + std::to_string(id));
    return relation_names_[static_cast<std::size_t>(id)];
}

int Vocabulary::inverse_of(int rel) const {
    if (!augmented()) throw ContractError("Vocabulary: inverse_of requires an augmented vocabulary");
    if (rel == identity_id_) throw ContractError("Vocabulary: identity relation has no inverse");
    if (rel < 0 || rel >= 2 * original_count_)
        throw std::out_of_range("Vocabulary: relation id " + std::to_string(rel));
    return rel < original_count_ ? rel + original_count_ : rel - original_count_;
}

void Vocabulary::augment() {
    if (augmented()) throw ContractError("Vocabulary: already augmented");
    original_count_ = relation_count();
    for (int r = 0; r < original_count_; ++r) {
        std::string inv = "inv_" + relation_names_[static_cast<std::size_t>(r)];
        if (relation_ids_.count(inv))
            throw ContractError("Vocabulary: relation name collision on '" + inv + "'");
        relation_ids_.emplace(inv, static_cast<int>(relation_names_.size()));
        relation_names_.push_back(std::move(inv));
    }
    std::string id_name = "B0";
    while (relation_ids_.count(id_name)) id_name = "_" + id_name;
    identity_id_ = static_cast<int>(relation_names_.size());
    relation_ids_.emplace(id_name, identity_id_);
    relation_names_.push_back(std::move(id_name));
}

// Hash of the relation layout only: model parameters are indexed by
// relation ids, while entity ids may legitimately grow between training
// and evaluation (unseen test entities extend the vocabulary).
std::uint64_t Vocabulary::content_hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& s : relation_names_) h = fnv1a(fnv1a(h, s), "\x02");
    h = (h ^ static_cast<std::uint64_t>(identity_id_ + 1)) * 1099511628211ULL;
    return h;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocabulary file: " + path);
    for (int i = 0; i < entity_count(); ++i) out << i << '\t' << entity_names_[static_cast<std::size_t>(i)] << "\tentity\n";
    for (int i = 0; i < relation_count(); ++i) {
        const char* kind = "relation";
        if (is_identity(i)) kind = "identity";
        else if (is_inverse(i)) kind = "inverse";
        out << i << '\t' << relation_names_[static_cast<std::size_t>(i)] << '\t' << kind << '\n';
    }
    if (!out) throw IoError("failed writing vocabulary file: " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read vocabulary file: " + path);
    Vocabulary v;
    int inverse_seen = 0;
    int identity_idx = -1;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string idx, name, kind;
        if (!std::getline(ss, idx, '\t') || !std::getline(ss, name, '\t') || !std::getline(ss, kind))
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected index\\tname\\tkind");
        int expect;
        if (kind == "entity") {
            expect = v.entity(name);
        } else if (kind == "relation" || kind == "inverse" || kind == "identity") {
            expect = static_cast<int>(v.relation_names_.size());
            v.relation_ids_.emplace(name, expect);
            v.relation_names_.push_back(name);
            if (kind == "inverse") ++inverse_seen;
            if (kind == "identity") identity_idx = expect;
        } else {
            throw ParseError(path + ":" + std::to_string(lineno) + ": unknown kind '" + kind + "'");
        }
        if (std::to_string(expect) != idx)
            throw ParseError(path + ":" + std::to_string(lineno) + ": non-dense index " + idx);
    }
    if (identity_idx >= 0) {
        v.identity_id_ = identity_idx;
        v.original_count_ = (v.relation_count() - 1) / 2;
        if (v.original_count_ != inverse_seen || v.relation_count() != 2 * v.original_count_ + 1)
            throw ParseError(path + ": inconsistent augmented relation layout");
    }
    return v;
}

bool TripleStore::contains(const Triple& t) const {
    return std::find(triples.begin(), triples.end(), t) != triples.end();
}

void TripleStore::add_unique(const Triple& t) {
    if (!contains(t)) triples.push_back(t);
}

std::vector<int> TripleStore::entities() const {
    std::set<int> s;
    for (const auto& t : triples) {
        s.insert(t.s);
        s.insert(t.o);
    }
    return {s.begin(), s.end()};
}

namespace {

LoadResult parse_lines(std::istream& in, Vocabulary& vocab, const std::string& origin) {
    LoadResult res;
    std::unordered_set<Triple, TripleHash> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t t1 = line.find('\t');
        std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        std::size_t t3 = t2 == std::string::npos ? std::string::npos : line.find('\t', t2 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos || t3 != std::string::npos || t1 == 0 ||
            t2 == t1 + 1 || t2 + 1 == line.size())
            throw ParseError(origin + ":" + std::to_string(lineno) +
                             ": expected exactly 3 tab-separated fields, got '" + line + "'");
        Triple t;
        t.s = vocab.entity(line.substr(0, t1));
        t.r = vocab.relation(line.substr(t1 + 1, t2 - t1 - 1));
        t.o = vocab.entity(line.substr(t2 + 1));
        if (seen.insert(t).second)
            res.store.triples.push_back(t);
        else
            ++res.duplicates_dropped;
    }
    res.store.entity_count = vocab.entity_count();
    res.store.relation_count = vocab.relation_count();
    return res;
}

} // namespace

LoadResult load_triples(const std::string& path, Vocabulary& vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read triple file: " + path);
    return parse_lines(in, vocab, path);
}

LoadResult load_triples_from_lines(const std::vector<std::string>& lines, Vocabulary& vocab,
                                   const std::string& origin) {
    std::ostringstream joined;
    for (const auto& l : lines) joined << l << '\n';
    std::istringstream in(joined.str());
    return parse_lines(in, vocab, origin);
}

void save_triples(const std::string& path, const TripleStore& store, const Vocabulary& vocab) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write triple file: " + path);
    for (const auto& t : store.triples)
        out << vocab.entity_name(t.s) << '\t' << vocab.relation_name(t.r) << '\t' << vocab.entity_name(t.o)
            << '\n';
    if (!out) throw IoError("failed writing triple file: " + path);
}

TripleStore augment_relations(const TripleStore& store, Vocabulary& vocab) {
    if (!vocab.augmented()) vocab.augment();
    int orig = vocab.original_relation_count();
    for (const auto& t : store.triples)
        if (t.r >= orig)
            throw ContractError("augment_relations: store already contains inverse or identity triples");
    TripleStore out;
    out.entity_count = store.entity_count;
    out.relation_count = vocab.relation_count();
    out.triples.reserve(store.triples.size() * 2);
    std::unordered_set<Triple, TripleHash> seen;
    auto push = [&](const Triple& t) {
        if (seen.insert(t).second) out.triples.push_back(t);
    };
    for (const auto& t : store.triples) push(t);
    for (const auto& t : store.triples) push(Triple{t.o, t.r + orig, t.s});
    return out;
}

SparseAdjacency SparseAdjacency::transposed() const {
    SparseAdjacency t;
    t.n = n;
    std::vector<std::pair<int, int>> e;
    e.reserve(nnz());
    for (std::size_t i = 0; i < nnz(); ++i) e.emplace_back(cols[i], rows[i]);
    std::sort(e.begin(), e.end());
    t.rows.reserve(e.size());
    t.cols.reserve(e.size());
    for (auto& [r, c] : e) {
        t.rows.push_back(r);
        t.cols.push_back(c);
    }
    return t;
}

SparseAdjacency build_adjacency(const TripleStore& store, const Vocabulary& vocab, int rel) {
    if (rel < 0 || rel >= vocab.relation_count())
        throw std::out_of_range("build_adjacency: relation id " + std::to_string(rel) + " out of range [0," +
                                std::to_string(vocab.relation_count()) + ")");
    SparseAdjacency adj;
    adj.n = store.entity_count;
    if (vocab.is_identity(rel)) {
        adj.rows.resize(static_cast<std::size_t>(adj.n));
        adj.cols.resize(static_cast<std::size_t>(adj.n));
        for (int i = 0; i < adj.n; ++i) {
            adj.rows[static_cast<std::size_t>(i)] = i;
            adj.cols[static_cast<std::size_t>(i)] = i;
        }
        return adj;
    }
    std::vector<std::pair<int, int>> e;
    for (const auto& t : store.triples)
        if (t.r == rel) e.emplace_back(t.s, t.o);
    std::sort(e.begin(), e.end());
    e.erase(std::unique(e.begin(), e.end()), e.end());
    adj.rows.reserve(e.size());
    adj.cols.reserve(e.size());
    for (auto& [r, c] : e) {
        adj.rows.push_back(r);
        adj.cols.push_back(c);
    }
    return adj;
}

std::vector<SparseAdjacency> build_operator_slots(const TripleStore& store, const Vocabulary& vocab) {
    if (!vocab.augmented()) throw ContractError("build_operator_slots: vocabulary must be augmented");
    std::vector<SparseAdjacency> ops;
    int dir = 2 * vocab.original_relation_count();
    ops.reserve(static_cast<std::size_t>(dir) + 1);
    ops.push_back(build_adjacency(store, vocab, vocab.identity_id()));
    for (int r = 0; r < dir; ++r) ops.push_back(build_adjacency(store, vocab, r));
    return ops;
}

std::pair<TripleStore, TripleStore> split_facts_train(const TripleStore& store, double ratio,
                                                      std::uint64_t seed) {
    if (store.triples.empty()) throw std::invalid_argument("split_facts_train: empty store");
    if (!(ratio > 0.0) || !std::isfinite(ratio))
        throw std::invalid_argument("split_facts_train: ratio must be a positive real, got " +
                                    std::to_string(ratio));
    std::vector<std::size_t> idx(store.triples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    auto n_facts = static_cast<std::size_t>(
        std::llround(static_cast<double>(idx.size()) * ratio / (ratio + 1.0)));
    TripleStore facts, train;
    facts.entity_count = train.entity_count = store.entity_count;
    facts.relation_count = train.relation_count = store.relation_count;
    for (std::size_t i = 0; i < idx.size(); ++i)
        (i < n_facts ? facts : train).triples.push_back(store.triples[idx[i]]);
    return {std::move(facts), std::move(train)};
}

TripleStore make_inductive_split(const TripleStore& train, const TripleStore& test) {
    std::unordered_set<int> banned;
    for (const auto& t : test.triples) {
        banned.insert(t.s);
        banned.insert(t.o);
    }
    TripleStore out;
    out.entity_count = train.entity_count;
    out.relation_count = train.relation_count;
    for (const auto& t : train.triples)
        if (!banned.count(t.s) && !banned.count(t.o)) out.triples.push_back(t);
    return out;
}

} // namespace drum::kg
