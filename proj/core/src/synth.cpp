#include "drum/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "drum/errors.hpp"
#include "drum/rng.hpp"

namespace drum::synth {

namespace {

using Tri = std::array<std::string, 3>;

void dedupe(std::vector<Tri>& triples) {
    std::sort(triples.begin(), triples.end());
    triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
}

std::size_t count_entities(const std::vector<Tri>& triples) {
    std::set<std::string> ents;
    for (const auto& t : triples) {
        ents.insert(t[0]);
        ents.insert(t[2]);
    }
    return ents.size();
}

// Drop triples (both endpoints keeping degree >= 1) until the target count
// is reached, then carve a test split whose entities all stay in train.
Dataset finalize(std::vector<Tri> triples, std::size_t target_triples, std::size_t target_entities,
                 double test_fraction, Rng& rng) {
    dedupe(triples);
    if (triples.size() < target_triples)
        throw ContractError("synth: generator produced " + std::to_string(triples.size()) +
                            " triples, need " + std::to_string(target_triples) + "; raise density");
    if (target_entities != 0 && count_entities(triples) != target_entities)
        throw ContractError("synth: generator produced " + std::to_string(count_entities(triples)) +
                            " entities, want " + std::to_string(target_entities));

    std::unordered_map<std::string, int> deg;
    for (const auto& t : triples) {
        ++deg[t[0]];
        ++deg[t[2]];
    }
    rng.shuffle(triples);
    std::vector<Tri> kept;
    kept.reserve(target_triples);
    std::size_t excess = triples.size() - target_triples;
    for (int min_deg : {3, 2}) { // prefer keeping well-connected entities first
        if (excess == 0) break;
        std::vector<Tri> next;
        next.reserve(triples.size());
        for (auto& t : triples) {
            if (excess > 0 && deg[t[0]] >= min_deg && deg[t[2]] >= min_deg) {
                --deg[t[0]];
                --deg[t[2]];
                --excess;
            } else {
                next.push_back(std::move(t));
            }
        }
        triples = std::move(next);
    }
    if (excess != 0) throw ContractError("synth: could not prune to target without orphaning entities");

    if (target_entities != 0 && count_entities(triples) != target_entities)
        throw ContractError("synth: prune dropped entities");

    auto target_test = static_cast<std::size_t>(
        std::llround(static_cast<double>(target_triples) * test_fraction));
    Dataset out;
    rng.shuffle(triples);
    std::unordered_map<std::string, int> train_deg = deg;
    for (auto& t : triples) {
        if (out.test.size() < target_test && train_deg[t[0]] > 1 && train_deg[t[2]] > 1) {
            --train_deg[t[0]];
            --train_deg[t[2]];
            out.test.push_back(std::move(t));
        } else {
            out.train.push_back(std::move(t));
        }
    }
    // deterministic file order independent of the shuffle history
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

std::string pad_id(const std::string& prefix, int n, int width) {
    std::string digits = std::to_string(n);
    while (static_cast<int>(digits.size()) < width) digits.insert(digits.begin(), '0');
    return prefix + digits;
}

// ---------------------------------------------------------------- family

struct Person {
    int id;
    bool male;
    int spouse = -1;
    int father = -1;
    int mother = -1;
    int birth_order = 0; // within sibling group, 0 = eldest
};

struct FamilyWorld {
    std::vector<Person> people;
    std::vector<std::vector<int>> children; // by parent id

    int add(bool male) {
        Person p;
        p.id = static_cast<int>(people.size());
        p.male = male;
        people.push_back(p);
        children.emplace_back();
        return p.id;
    }
};

// Builds one family consuming exactly `size` new people.
void build_family(FamilyWorld& w, Rng& rng, int size) {
    if (size < 4) throw ContractError("build_family: size must be >= 4");
    int budget = size;
    int f = w.add(true);
    int m = w.add(false);
    w.people[f].spouse = m;
    w.people[m].spouse = f;
    budget -= 2;
    std::vector<std::pair<int, int>> couples{{f, m}};
    std::vector<int> singles;
    std::size_t next_couple = 0;
    while (budget > 0) {
        if (next_couple >= couples.size()) {
            // marry off an unmarried descendant to keep growing
            if (singles.empty() || budget < 2) {
                // give the last couple another child
                auto [df, dm] = couples.back();
                int c = w.add(rng.next_bool(0.5));
                w.people[c].father = df;
                w.people[c].mother = dm;
                w.people[c].birth_order = static_cast<int>(w.children[df].size());
                w.children[df].push_back(c);
                w.children[dm].push_back(c);
                --budget;
                continue;
            }
            int s = singles.back();
            singles.pop_back();
            int sp = w.add(!w.people[s].male);
            w.people[s].spouse = sp;
            w.people[sp].spouse = s;
            --budget;
            couples.emplace_back(w.people[s].male ? s : sp, w.people[s].male ? sp : s);
            continue;
        }
        auto [cf, cm] = couples[next_couple++];
        int kids = std::min(budget, 5 + rng.next_int(4));
        for (int k = 0; k < kids && budget > 0; ++k) {
            int c = w.add(rng.next_bool(0.5));
            w.people[c].father = cf;
            w.people[c].mother = cm;
            w.people[c].birth_order = static_cast<int>(w.children[cf].size());
            w.children[cf].push_back(c);
            w.children[cm].push_back(c);
            --budget;
            if (budget > 0 && rng.next_bool(0.64)) {
                int sp = w.add(!w.people[c].male);
                w.people[c].spouse = sp;
                w.people[sp].spouse = c;
                --budget;
                couples.emplace_back(w.people[c].male ? c : sp, w.people[c].male ? sp : c);
            } else {
                singles.push_back(c);
            }
        }
    }
}

} // namespace

Dataset gen_family(std::uint64_t seed) {
    const int kPeople = 3007;
    const std::size_t kTriples = 28356;
    const double kSiblingKeep = 0.70;
    Rng rng(seed ^ 0xfa817f5eedULL);

    FamilyWorld w;
    int left = kPeople;
    while (left > 0) {
        int size;
        if (left > 58) {
            size = 22 + rng.next_int(19); // 22..40
            if (left - size < 4) size = left;
        } else {
            size = left;
        }
        build_family(w, rng, size);
        left -= size;
    }
    if (static_cast<int>(w.people.size()) != kPeople)
        throw ContractError("gen_family: people budget mismatch");

    auto name = [&](int id) { return pad_id("p", id, 5); };
    std::vector<Tri> triples;
    triples.reserve(40000);
    auto emit = [&](int x, const char* rel, int y) { triples.push_back({name(x), rel, name(y)}); };

    for (const Person& p : w.people) {
        if (p.spouse >= 0 && p.male) {
            emit(p.id, "husband", p.spouse);
            emit(p.spouse, "wife", p.id);
        }
        if (p.father >= 0) {
            emit(p.father, "father", p.id);
            emit(p.mother, "mother", p.id);
            emit(p.id, p.male ? "son" : "daughter", p.father);
            emit(p.id, p.male ? "son" : "daughter", p.mother);
        }
    }
    // siblings: elder -> younger only, subsampled; uncles/aunts (blood and
    // by marriage) complete
    for (const Person& p : w.people) {
        if (p.father < 0) continue;
        const auto& sibs = w.children[static_cast<std::size_t>(p.father)];
        for (int s : sibs) {
            if (s == p.id) continue;
            const Person& q = w.people[static_cast<std::size_t>(s)];
            if (p.birth_order < q.birth_order && rng.next_bool(kSiblingKeep))
                emit(p.id, p.male ? "brother" : "sister", s);
            for (int c : w.children[static_cast<std::size_t>(p.id)]) {
                bool c_male = w.people[static_cast<std::size_t>(c)].male;
                emit(s, q.male ? "uncle" : "aunt", c);
                emit(c, c_male ? "nephew" : "niece", s);
                if (q.spouse >= 0) {
                    emit(q.spouse, q.male ? "aunt" : "uncle", c);
                    emit(c, c_male ? "nephew" : "niece", q.spouse);
                }
            }
        }
    }
    return finalize(std::move(triples), kTriples, kPeople, 0.10, rng);
}

// ---------------------------------------------------------------- umls

namespace {

const char* kConceptRelations[46] = {
    "affects",        "causes",          "treats",           "prevents",
    "diagnoses",      "complicates",     "manifestation_of", "associated_with",
    "interacts_with", "co_occurs_with",  "result_of",        "degree_of",
    "measures",       "measurement_of",  "analyzes",         "assesses_effect_of",
    "precedes",       "process_of",      "part_of",          "consists_of",
    "contains",       "connected_to",    "adjacent_to",      "surrounds",
    "traverses",      "location_of",     "disrupts",         "uses",
    "method_of",      "performs",        "carries_out",      "exhibits",
    "produces",       "derivative_of",   "developmental_form_of", "occurs_in",
    "practices",      "issue_in",        "ingredient_of",    "property_of",
    "branch_of",      "tributary_of",    "evaluation_of",    "indicates",
    "isa",            "conceptual_part_of"};

} // namespace

Dataset gen_umls_like(std::uint64_t seed) {
    const int kConcepts = 135;
    const std::size_t kTriples = 5960;
    const int kGroups = 18;
    Rng rng(seed ^ 0x0135c0ce97ULL);

    std::vector<std::vector<int>> groups(kGroups);
    for (int c = 0; c < kConcepts; ++c) groups[static_cast<std::size_t>(c % kGroups)].push_back(c);

    // Concept groups sit on a ring; every relation shifts group index by a
    // fixed nonzero offset, so chains never return to their start entity
    // and relations compose whenever offsets add up.
    std::vector<std::set<std::pair<int, int>>> edges(46);
    std::vector<int> offset(46, 0);
    const int kSeedRels = 12;
    for (int r = 0; r < kSeedRels; ++r) {
        offset[static_cast<std::size_t>(r)] = 1 + rng.next_int(5);
        double density = rng.next_double(0.10, 0.20);
        int starts = 11 + rng.next_int(8); // 11..18 start groups
        for (int g = 0; g < starts; ++g) {
            int ga = g % kGroups;
            int gb = (ga + offset[static_cast<std::size_t>(r)]) % kGroups;
            for (int a : groups[static_cast<std::size_t>(ga)])
                for (int b : groups[static_cast<std::size_t>(gb)])
                    if (rng.next_bool(density)) edges[static_cast<std::size_t>(r)].insert({a, b});
        }
    }
    // every seed gets a near-synonym twin so seed edges are themselves
    // one-atom predictable, like co-occurring relation pairs in typed
    // concept networks
    const int kTwinRels = 12;
    for (int r = kSeedRels; r < kSeedRels + kTwinRels; ++r) {
        int src = r - kSeedRels;
        offset[static_cast<std::size_t>(r)] = offset[static_cast<std::size_t>(src)];
        for (auto e : edges[static_cast<std::size_t>(src)])
            if (rng.next_bool(0.93)) edges[static_cast<std::size_t>(r)].insert(e);
    }

    auto compose_into = [&](int dst, int r1, int r2) {
        std::unordered_map<int, std::vector<int>> out2;
        for (auto [a, b] : edges[static_cast<std::size_t>(r2)]) out2[a].push_back(b);
        for (auto [a, m] : edges[static_cast<std::size_t>(r1)]) {
            auto it = out2.find(m);
            if (it == out2.end()) continue;
            for (int b : it->second)
                if (a != b) edges[static_cast<std::size_t>(dst)].insert({a, b});
        }
    };

    // 16 composition relations over seeds, twins, and earlier compositions
    const int kCompRels = 16;
    const int kCompBase = kSeedRels + kTwinRels;
    for (int r = kCompBase; r < kCompBase + kCompRels; ++r) {
        for (int tries = 0; tries < 24; ++tries) {
            int r1 = rng.next_int(r);
            int r2 = rng.next_int(r);
            int total = (offset[static_cast<std::size_t>(r1)] + offset[static_cast<std::size_t>(r2)]) % kGroups;
            if (total == 0) continue;
            offset[static_cast<std::size_t>(r)] = total;
            compose_into(r, r1, r2);
            if (edges[static_cast<std::size_t>(r)].size() >= 40) break;
            edges[static_cast<std::size_t>(r)].clear();
        }
    }
    // 6 unions of two compositions with different offsets: representable
    // only with rank >= 2
    const int kUnionRels = 6;
    for (int r = kCompBase + kCompRels; r < kCompBase + kCompRels + kUnionRels; ++r) {
        for (int part = 0; part < 2; ++part) {
            for (int tries = 0; tries < 24; ++tries) {
                int r1 = rng.next_int(kSeedRels);
                int r2 = rng.next_int(kSeedRels);
                int total = (offset[static_cast<std::size_t>(r1)] + offset[static_cast<std::size_t>(r2)]) % kGroups;
                if (total == 0) continue;
                std::size_t before = edges[static_cast<std::size_t>(r)].size();
                compose_into(r, r1, r2);
                if (edges[static_cast<std::size_t>(r)].size() >= before + 30) break;
            }
        }
    }
    if (kCompBase + kCompRels + kUnionRels != 46) throw ContractError("gen_umls_like: relation budget");

    auto name = [&](int id) { return pad_id("concept_", id, 3); };
    std::vector<Tri> triples;
    for (int r = 0; r < 46; ++r)
        for (auto [a, b] : edges[static_cast<std::size_t>(r)])
            triples.push_back({name(a), kConceptRelations[r], name(b)});

    // every concept participates in its group: ensure coverage before prune
    std::set<std::string> ents;
    for (const auto& t : triples) {
        ents.insert(t[0]);
        ents.insert(t[2]);
    }
    for (int c = 0; c < kConcepts; ++c) {
        if (ents.count(name(c))) continue;
        int other = (c + 1) % kConcepts;
        triples.push_back({name(c), "associated_with", name(other)});
        triples.push_back({name(other), "associated_with", name(c)});
    }
    return finalize(std::move(triples), kTriples, kConcepts, 0.10, rng);
}

// ---------------------------------------------------------------- kinship

Dataset gen_kinship_like(std::uint64_t seed) {
    const int kPeople = 104;
    const std::size_t kTriples = 9587;
    Rng rng(seed ^ 0x104a17a3aULL);

    std::vector<int> section(kPeople);
    std::vector<bool> male(kPeople);
    for (int p = 0; p < kPeople; ++p) {
        section[static_cast<std::size_t>(p)] = p % 4; // balanced sections
        male[static_cast<std::size_t>(p)] = rng.next_bool(0.5);
    }

    // term table over ordered section pairs; the first 9 pairs split by the
    // object's gender: 9*2 + 7 = 25 terms
    int term_of[4][4][2];
    int next_term = 0;
    int pair_index = 0;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            if (pair_index < 9) {
                term_of[a][b][0] = next_term++;
                term_of[a][b][1] = next_term++;
            } else {
                term_of[a][b][0] = term_of[a][b][1] = next_term++;
            }
            ++pair_index;
        }
    if (next_term != 25) throw ContractError("gen_kinship_like: term table size");

    auto name = [&](int id) { return pad_id("person_", id, 3); };
    std::vector<Tri> triples;
    triples.reserve(104 * 103);
    for (int x = 0; x < kPeople; ++x)
        for (int y = 0; y < kPeople; ++y) {
            if (x == y) continue;
            int t = term_of[section[static_cast<std::size_t>(x)]][section[static_cast<std::size_t>(y)]]
                           [male[static_cast<std::size_t>(y)] ? 0 : 1];
            triples.push_back({name(x), pad_id("term", t, 2), name(y)});
        }
    return finalize(std::move(triples), kTriples, kPeople, 0.10, rng);
}

// ---------------------------------------------------------------- wordnet

Dataset gen_wn_like(std::uint64_t seed) {
    Rng rng(seed ^ 0x3189abcdeULL);
    const int kTreeNodes = 1150;
    const int kSatellites = 250;

    auto name = [&](int id) { return pad_id("synset_", id, 5); };
    std::vector<int> parent(kTreeNodes, -1);
    const int kRoots = 6;
    for (int v = kRoots; v < kTreeNodes; ++v) parent[static_cast<std::size_t>(v)] = rng.next_int(v);

    std::vector<Tri> triples;
    auto emit = [&](int a, const char* rel, int b) { triples.push_back({name(a), rel, name(b)}); };
    for (int v = kRoots; v < kTreeNodes; ++v) {
        emit(v, "_hypernym", parent[static_cast<std::size_t>(v)]);
        emit(parent[static_cast<std::size_t>(v)], "_hyponym", v);
    }
    // member meronymy between random tree nodes, both directions
    for (int i = 0; i < 420; ++i) {
        int a = rng.next_int(kTreeNodes);
        int b = rng.next_int(kTreeNodes);
        if (a == b) continue;
        emit(a, "_member_meronym", b);
        emit(b, "_member_holonym", a);
    }
    for (int i = 0; i < 260; ++i) {
        int a = rng.next_int(kTreeNodes);
        int b = rng.next_int(kTreeNodes);
        if (a == b) continue;
        emit(a, "_part_of", b);
        emit(b, "_has_part", a);
    }
    // derivation links tie satellites to tree nodes, symmetric
    for (int s = 0; s < kSatellites; ++s) {
        int id = kTreeNodes + s;
        int links = 1 + rng.next_int(2);
        for (int l = 0; l < links; ++l) {
            int b = rng.next_int(kTreeNodes);
            emit(id, "_derivationally_related_form", b);
            emit(b, "_derivationally_related_form", id);
        }
    }
    for (int i = 0; i < 120; ++i) {
        int a = kTreeNodes + rng.next_int(kSatellites);
        int b = kTreeNodes + rng.next_int(kSatellites);
        if (a == b) continue;
        emit(a, "_similar_to", b);
        emit(b, "_similar_to", a);
    }
    for (int i = 0; i < 100; ++i) {
        int a = rng.next_int(kTreeNodes);
        int b = rng.next_int(kTreeNodes);
        if (a == b) continue;
        emit(a, "_also_see", b);
        emit(b, "_also_see", a);
    }
    dedupe(triples);
    std::size_t target = triples.size() - triples.size() / 50; // light prune for incompleteness
    return finalize(std::move(triples), target, 0, 0.12, rng);
}

void write_dataset(const std::string& dir, const Dataset& dataset) {
    std::filesystem::create_directories(dir);
    auto write = [&](const std::string& file, const std::vector<Tri>& triples) {
        std::ofstream out(dir + "/" + file, std::ios::binary);
        if (!out) throw IoError("cannot write " + dir + "/" + file);
        for (const auto& t : triples) out << t[0] << '\t' << t[1] << '\t' << t[2] << '\n';
        if (!out) throw IoError("failed writing " + dir + "/" + file);
    };
    write("train.txt", dataset.train);
    write("test.txt", dataset.test);
}

} // namespace drum::synth
