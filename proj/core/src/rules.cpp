#include "drum/rules.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace drum::rules {

using model::CoefficientTensor;

std::size_t RuleList::rule_count() const {
    std::size_t n = 0;
    for (const auto& [head, rules] : by_head) n += rules.size();
    return n;
}

std::vector<RawPath> expand_rank(const CoefficientTensor& coeffs, int rank, double min_confidence,
                                 bool allow_exhaustive) {
    if (rank < 0 || rank >= coeffs.L) throw std::out_of_range("expand_rank: rank " + std::to_string(rank));
    if (min_confidence <= 0.0 && !allow_exhaustive) {
        double total = std::pow(static_cast<double>(coeffs.K), static_cast<double>(coeffs.T));
        if (total > 200000.0)
            throw std::invalid_argument(
                "expand_rank: non-positive min_confidence would enumerate ~" + std::to_string(total) +
                " paths; pass allow_exhaustive to override");
    }
    std::vector<RawPath> out;
    std::vector<int> slots(static_cast<std::size_t>(coeffs.T), 0);
    auto dfs = [&](auto&& self, int step, double product) -> void {
        if (product < min_confidence) return; // sound: coefficients <= 1
        if (step == coeffs.T) {
            out.push_back(RawPath{slots, product});
            return;
        }
        for (int k = 0; k < coeffs.K; ++k) {
            slots[static_cast<std::size_t>(step)] = k;
            self(self, step + 1, product * coeffs.at(rank, step, k));
        }
    };
    dfs(dfs, 0, 1.0);
    return out;
}

std::vector<int> collapse_identity(const std::vector<int>& slots) {
    std::vector<int> body;
    body.reserve(slots.size());
    for (int s : slots)
        if (s != 0) body.push_back(kg::relation_of_slot(s));
    return body;
}

double default_min_confidence(const CoefficientTensor& coeffs) {
    double top = 0.0;
    for (int j = 0; j < coeffs.L; ++j) {
        double p = 1.0;
        for (int i = 0; i < coeffs.T; ++i) {
            double mx = 0.0;
            for (int k = 0; k < coeffs.K; ++k) mx = std::max(mx, coeffs.at(j, i, k));
            p *= mx;
        }
        top = std::max(top, p);
    }
    return std::max(1e-4, 0.01 * top);
}

std::vector<Rule> extract_rules(const CoefficientTensor& coeffs, int head, double min_confidence,
                                bool allow_exhaustive) {
    std::map<std::vector<int>, double> merged;
    for (int j = 0; j < coeffs.L; ++j) {
        for (const RawPath& p : expand_rank(coeffs, j, min_confidence, allow_exhaustive)) {
            std::vector<int> body = collapse_identity(p.slots);
            if (body.empty()) continue;
            merged[body] += p.confidence;
        }
    }
    std::vector<Rule> out;
    out.reserve(merged.size());
    for (auto& [body, conf] : merged) out.push_back(Rule{head, body, conf});
    std::stable_sort(out.begin(), out.end(), [](const Rule& a, const Rule& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return a.body < b.body;
    });
    return out;
}

std::vector<Rule> extract_rules(const CoefficientTensor& coeffs, int head) {
    return extract_rules(coeffs, head, default_min_confidence(coeffs));
}

CoefficientTensor construct_coefficients(const std::vector<Rule>& rules, int max_rule_length,
                                         int operator_count) {
    CoefficientTensor t(static_cast<int>(rules.size()), max_rule_length, operator_count);
    for (std::size_t j = 0; j < rules.size(); ++j) {
        const Rule& rule = rules[j];
        if (rule.body.empty())
            throw std::invalid_argument("construct_coefficients: empty rule body");
        if (static_cast<int>(rule.body.size()) > max_rule_length)
            throw std::invalid_argument("construct_coefficients: body length " +
                                        std::to_string(rule.body.size()) + " exceeds T=" +
                                        std::to_string(max_rule_length));
        if (rule.confidence < 0.0 || rule.confidence > 1.0)
            throw std::invalid_argument(
                "construct_coefficients: confidence must lie in [0,1] for the softmax-representable "
                "construction, got " + std::to_string(rule.confidence));
        for (std::size_t i = 0; i < rule.body.size(); ++i) {
            int slot = kg::slot_of_relation(rule.body[i]);
            if (slot < 1 || slot >= operator_count)
                throw std::out_of_range("construct_coefficients: relation " + std::to_string(rule.body[i]) +
                                        " has no operator slot");
            t.at(static_cast<int>(j), static_cast<int>(i), slot) = i == 0 ? rule.confidence : 1.0;
        }
        for (int i = static_cast<int>(rule.body.size()); i < max_rule_length; ++i)
            t.at(static_cast<int>(j), i, 0) = 1.0; // identity padding
    }
    return t;
}

double path_confidence(const CoefficientTensor& coeffs, int rank, const std::vector<int>& slots) {
    if (static_cast<int>(slots.size()) != coeffs.T)
        throw std::invalid_argument("path_confidence: path length " + std::to_string(slots.size()) +
                                    " vs T=" + std::to_string(coeffs.T));
    double p = 1.0;
    for (int i = 0; i < coeffs.T; ++i) p *= coeffs.at(rank, i, slots[static_cast<std::size_t>(i)]);
    return p;
}

int path_distance(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("path_distance: lengths differ");
    int d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
    return d;
}

std::vector<RawPath> theorem1_chain(const CoefficientTensor& rank1, const std::vector<int>& path_o,
                                    const std::vector<int>& path_s) {
    if (rank1.L != 1) throw ContractError("theorem1_chain: coefficient tensor must be rank 1");
    if (static_cast<int>(path_o.size()) != rank1.T || static_cast<int>(path_s.size()) != rank1.T)
        throw std::invalid_argument("theorem1_chain: paths must have length T");
    for (const auto* p : {&path_o, &path_s})
        for (int s : *p)
            if (s < 0 || s >= rank1.K) throw std::out_of_range("theorem1_chain: slot out of range");
    if (path_o == path_s) return {};

    std::vector<int> star(static_cast<std::size_t>(rank1.T));
    for (int i = 0; i < rank1.T; ++i) {
        int best = 0;
        for (int k = 1; k < rank1.K; ++k)
            if (rank1.at(0, i, k) > rank1.at(0, i, best)) best = k;
        star[static_cast<std::size_t>(i)] = best;
    }

    // stepwise replacement toward the argmax path, last step first; each
    // replacement cannot decrease the product
    auto walk_to_star = [&](const std::vector<int>& from) {
        std::vector<std::vector<int>> seq{from};
        std::vector<int> cur = from;
        for (int i = rank1.T - 1; i >= 0; --i) {
            if (cur[static_cast<std::size_t>(i)] == star[static_cast<std::size_t>(i)]) continue;
            cur[static_cast<std::size_t>(i)] = star[static_cast<std::size_t>(i)];
            seq.push_back(cur);
        }
        return seq;
    };

    std::vector<std::vector<int>> a = walk_to_star(path_o);
    std::vector<std::vector<int>> b = walk_to_star(path_s);
    std::vector<std::vector<int>> full = a;
    for (std::size_t i = b.size() - 1; i-- > 0;) full.push_back(b[i]); // reversed, skipping star
    std::vector<RawPath> interior;
    for (std::size_t i = 1; i + 1 < full.size(); ++i)
        interior.push_back(RawPath{full[i], path_confidence(rank1, 0, full[i])});
    return interior;
}

std::string format_rule(const Rule& rule, const kg::Vocabulary& vocab) {
    std::string var_a = "A", var_b = "B";
    std::ostringstream out;
    char conf[32];
    std::snprintf(conf, sizeof(conf), "%.6f", rule.confidence);
    out << conf << '\t' << vocab.relation_name(rule.head) << "(" << var_a << ", " << var_b << ") <- ";
    std::size_t m = rule.body.size();
    for (std::size_t i = 0; i < m; ++i) {
        std::string lhs = i == 0 ? var_a : "z" + std::to_string(i);
        std::string rhs = i + 1 == m ? var_b : "z" + std::to_string(i + 1);
        if (i) out << ", ";
        out << vocab.relation_name(rule.body[i]) << "(" << lhs << ", " << rhs << ")";
    }
    return out.str();
}

void save_rules(const std::string& path, const RuleList& rules, const kg::Vocabulary& vocab) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write rule file: " + path);
    for (const auto& [head, list] : rules.by_head) {
        out << "# head: " << vocab.relation_name(head) << '\n';
        for (const Rule& r : list) out << format_rule(r, vocab) << '\n';
    }
    if (!out) throw IoError("failed writing rule file: " + path);
}

namespace {

// atom = name(var, var); returns name and advances pos past the atom
std::string parse_atom(const std::string& s, std::size_t& pos, const std::string& ctx) {
    std::size_t open = s.find('(', pos);
    std::size_t close = s.find(')', pos);
    if (open == std::string::npos || close == std::string::npos || close < open)
        throw ParseError(ctx + ": malformed atom near '" + s.substr(pos) + "'");
    std::string name = s.substr(pos, open - pos);
    while (!name.empty() && name.front() == ' ') name.erase(name.begin());
    while (!name.empty() && name.back() == ' ') name.pop_back();
    if (name.empty()) throw ParseError(ctx + ": empty relation name");
    pos = close + 1;
    return name;
}

} // namespace

RuleList load_rules(const std::string& path, const kg::Vocabulary& vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read rule file: " + path);
    RuleList out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::string ctx = path + ":" + std::to_string(lineno);
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError(ctx + ": expected confidence\\trule");
        double conf = 0.0;
        try {
            conf = std::stod(line.substr(0, tab));
        } catch (const std::exception&) {
            throw ParseError(ctx + ": bad confidence '" + line.substr(0, tab) + "'");
        }
        std::string rest = line.substr(tab + 1);
        std::size_t pos = 0;
        std::string head_name = parse_atom(rest, pos, ctx);
        std::size_t arrow = rest.find("<-", pos);
        if (arrow == std::string::npos) throw ParseError(ctx + ": missing '<-'");
        pos = arrow + 2;
        std::vector<std::string> body_names;
        while (pos < rest.size()) {
            while (pos < rest.size() && (rest[pos] == ' ' || rest[pos] == ',')) ++pos;
            if (pos >= rest.size()) break;
            body_names.push_back(parse_atom(rest, pos, ctx));
        }
        if (body_names.empty()) throw ParseError(ctx + ": rule has no body atoms");

        auto head_id = vocab.relation_id(head_name);
        bool resolved = head_id.has_value();
        std::vector<int> body;
        for (const auto& b : body_names) {
            auto id = vocab.relation_id(b);
            if (!id) {
                resolved = false;
                break;
            }
            body.push_back(*id);
        }
        if (!resolved) {
            out.unresolved.push_back(rest);
            continue;
        }
        out.by_head[*head_id].push_back(Rule{*head_id, std::move(body), conf});
    }
    for (auto& [head, list] : out.by_head)
        std::stable_sort(list.begin(), list.end(), [](const Rule& a, const Rule& b) {
            if (a.confidence != b.confidence) return a.confidence > b.confidence;
            return a.body < b.body;
        });
    return out;
}

} // namespace drum::rules
