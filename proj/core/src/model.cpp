#include "drum/model.hpp"

#include <cmath>
#include <string>

#include "drum/rng.hpp"

namespace drum::model {

using diff::Node;
using diff::Tape;
using diff::Tensor;

void ModelConfig::validate() const {
    if (max_rule_length < 1) throw std::invalid_argument("ModelConfig: T must be >= 1");
    if (rank < 1) throw std::invalid_argument("ModelConfig: L must be >= 1");
    if (hidden_dim < 1 || embed_dim < 1) throw std::invalid_argument("ModelConfig: dims must be positive");
    if (operator_count < 2) throw std::invalid_argument("ModelConfig: operator_count must be >= 2");
    if (!(epsilon_log > 0.0)) throw std::invalid_argument("ModelConfig: epsilon_log must be positive");
}

DrumModel::Cell DrumModel::make_cell(const std::string& prefix) {
    int h = config_.hidden_dim;
    int e = config_.embed_dim;
    Cell c{};
    c.Wi = &params_.create(prefix + ".Wi", h, e);
    c.Ui = &params_.create(prefix + ".Ui", h, h);
    c.bi = &params_.create(prefix + ".bi", h, 1);
    c.Wf = &params_.create(prefix + ".Wf", h, e);
    c.Uf = &params_.create(prefix + ".Uf", h, h);
    c.bf = &params_.create(prefix + ".bf", h, 1);
    c.Wo = &params_.create(prefix + ".Wo", h, e);
    c.Uo = &params_.create(prefix + ".Uo", h, h);
    c.bo = &params_.create(prefix + ".bo", h, 1);
    c.Wg = &params_.create(prefix + ".Wg", h, e);
    c.Ug = &params_.create(prefix + ".Ug", h, h);
    c.bg = &params_.create(prefix + ".bg", h, 1);
    return c;
}

DrumModel::DrumModel(ModelConfig config, int head_count) : config_(config), head_count_(head_count) {
    config_.validate();
    if (head_count_ < 1) throw std::invalid_argument("DrumModel: head_count must be >= 1");
    head_embeddings_ = &params_.create("head_embeddings", head_count_, config_.embed_dim);
    for (int j = 0; j < config_.rank; ++j) {
        fwd_cells_.push_back(make_cell("rank" + std::to_string(j) + ".fwd"));
        bwd_cells_.push_back(make_cell("rank" + std::to_string(j) + ".bwd"));
    }
    out_w_ = &params_.create("out.W", config_.operator_count, 2 * config_.hidden_dim);
    out_b_ = &params_.create("out.b", config_.operator_count, 1);
    init_params();
}

void DrumModel::init_params() {
    Rng rng(config_.seed ^ 0x5eedc0ffee123457ULL);
    for (std::size_t p = 0; p < params_.size(); ++p) {
        diff::Parameter& par = params_[p];
        bool is_bias = par.value.cols == 1 && par.name != "head_embeddings";
        if (is_bias) continue; // biases start at zero
        for (double& v : par.value.data) v = rng.next_double(-0.1, 0.1);
    }
}

namespace {

struct LstmState {
    Node h;
    Node c;
};

} // namespace

CoefficientNodes DrumModel::coefficient_nodes(Tape& tape, int head) const {
    if (head < 0 || head >= head_count_)
        throw std::out_of_range("coefficient_nodes: head " + std::to_string(head) + " out of [0," +
                                std::to_string(head_count_) + ")");
    int T = config_.max_rule_length;
    int L = config_.rank;
    int h = config_.hidden_dim;

    Node e_h = tape.row(tape.parameter(*head_embeddings_), head);
    Node out_w = tape.parameter(*out_w_);
    Node out_b = tape.parameter(*out_b_);

    auto load_cell = [&](const Cell& c) {
        CellNodes n;
        n.Wi = tape.parameter(*c.Wi);
        n.Ui = tape.parameter(*c.Ui);
        n.bi = tape.parameter(*c.bi);
        n.Wf = tape.parameter(*c.Wf);
        n.Uf = tape.parameter(*c.Uf);
        n.bf = tape.parameter(*c.bf);
        n.Wo = tape.parameter(*c.Wo);
        n.Uo = tape.parameter(*c.Uo);
        n.bo = tape.parameter(*c.bo);
        n.Wg = tape.parameter(*c.Wg);
        n.Ug = tape.parameter(*c.Ug);
        n.bg = tape.parameter(*c.bg);
        return n;
    };

    // standard gated cell: i,f,o = sigmoid, g = tanh, c' = f*c + i*g,
    // h' = o*tanh(c'). The input is e_H at every step, so the W*x+b gate
    // terms are computed once per cell and reused across steps.
    struct GateInputs {
        Node i, f, o, g;
    };
    auto precompute = [&](const CellNodes& c) {
        return GateInputs{tape.affine(c.Wi, e_h, c.bi), tape.affine(c.Wf, e_h, c.bf),
                          tape.affine(c.Wo, e_h, c.bo), tape.affine(c.Wg, e_h, c.bg)};
    };
    auto step = [&](const CellNodes& c, const GateInputs& in, const LstmState& s) {
        Node i = tape.sigmoid(tape.add(in.i, tape.matvec(c.Ui, s.h)));
        Node f = tape.sigmoid(tape.add(in.f, tape.matvec(c.Uf, s.h)));
        Node o = tape.sigmoid(tape.add(in.o, tape.matvec(c.Uo, s.h)));
        Node g = tape.tanh(tape.add(in.g, tape.matvec(c.Ug, s.h)));
        Node cn = tape.add(tape.mul(f, s.c), tape.mul(i, g));
        Node hn = tape.mul(o, tape.tanh(cn));
        return LstmState{hn, cn};
    };

    CoefficientNodes out;
    out.L = L;
    out.T = T;
    out.nodes.reserve(static_cast<std::size_t>(L) * static_cast<std::size_t>(T));
    for (int j = 0; j < L; ++j) {
        CellNodes fwd = load_cell(fwd_cells_[static_cast<std::size_t>(j)]);
        CellNodes bwd = load_cell(bwd_cells_[static_cast<std::size_t>(j)]);
        GateInputs fin = precompute(fwd);
        GateInputs bin = precompute(bwd);
        LstmState fs{tape.constant(Tensor(h, 1)), tape.constant(Tensor(h, 1))};
        LstmState bs{tape.constant(Tensor(h, 1)), tape.constant(Tensor(h, 1))};
        std::vector<Node> fhidden, bhidden;
        fhidden.reserve(static_cast<std::size_t>(T));
        bhidden.reserve(static_cast<std::size_t>(T));
        for (int i = 0; i < T; ++i) {
            fs = step(fwd, fin, fs);
            bs = step(bwd, bin, bs);
            fhidden.push_back(fs.h);
            bhidden.push_back(bs.h);
        }
        // step i pairs the forward state at i with the backward state T-i+1
        // steps from the far end
        for (int i = 0; i < T; ++i) {
            Node pair = tape.concat(fhidden[static_cast<std::size_t>(i)],
                                    bhidden[static_cast<std::size_t>(T - 1 - i)]);
            Node logits = tape.affine(out_w, pair, out_b);
            out.nodes.push_back(tape.softmax(logits));
        }
    }
    return out;
}

CoefficientTensor DrumModel::coefficients(int head) const {
    Tape tape;
    CoefficientNodes nodes = coefficient_nodes(tape, head);
    CoefficientTensor t(nodes.L, nodes.T, config_.operator_count);
    for (int j = 0; j < nodes.L; ++j)
        for (int i = 0; i < nodes.T; ++i) {
            const Tensor& v = tape.value(nodes.at(j, i));
            for (int k = 0; k < config_.operator_count; ++k) t.at(j, i, k) = v[static_cast<std::size_t>(k)];
        }
    return t;
}

Node DrumModel::score_nodes(Tape& tape, const CoefficientNodes& coeffs,
                            std::span<const kg::SparseAdjacency> ops, int x) const {
    if (static_cast<int>(ops.size()) != config_.operator_count)
        throw DimensionError("score_nodes: " + std::to_string(ops.size()) + " operators vs operator_count " +
                             std::to_string(config_.operator_count));
    int n = ops.empty() ? 0 : ops[0].n;
    if (x < 0 || x >= n) throw std::out_of_range("score_nodes: entity " + std::to_string(x));
    Node total{};
    for (int j = 0; j < coeffs.L; ++j) {
        Node u = tape.one_hot(n, x);
        for (int i = 0; i < coeffs.T; ++i) u = tape.graph_step(coeffs.at(j, i), u, ops);
        total = (j == 0) ? u : tape.add(total, u);
    }
    return total;
}

Node DrumModel::query_loss_node(Tape& tape, Node score, int true_tail) const {
    const Tensor& s = tape.value(score);
    double eps = config_.epsilon_log;
    Node sy = tape.pick(score, true_tail);
    Node denom = tape.reduce_sum(score);
    Node log_num = tape.log_guard(tape.add_const(eps, sy), eps * 0.5);
    Node log_den = tape.log_guard(tape.add_const(static_cast<double>(s.rows) * eps, denom), eps * 0.5);
    return tape.sub(log_den, log_num);
}

std::vector<double> score_all_tails(const CoefficientTensor& coeffs,
                                    std::span<const kg::SparseAdjacency> ops, int x) {
    if (static_cast<int>(ops.size()) != coeffs.K)
        throw DimensionError("score_all_tails: " + std::to_string(ops.size()) + " operators vs K=" +
                             std::to_string(coeffs.K));
    int n = ops.empty() ? 0 : ops[0].n;
    if (x < 0 || x >= n) throw std::out_of_range("score_all_tails: entity " + std::to_string(x));
    std::vector<double> total(static_cast<std::size_t>(n), 0.0);
    std::vector<double> u(static_cast<std::size_t>(n));
    std::vector<double> next(static_cast<std::size_t>(n));
    for (int j = 0; j < coeffs.L; ++j) {
        std::fill(u.begin(), u.end(), 0.0);
        u[static_cast<std::size_t>(x)] = 1.0;
        for (int i = 0; i < coeffs.T; ++i) {
            std::fill(next.begin(), next.end(), 0.0);
            for (int k = 0; k < coeffs.K; ++k) {
                double c = coeffs.at(j, i, k);
                if (c == 0.0) continue;
                const auto& a = ops[static_cast<std::size_t>(k)];
                for (std::size_t e = 0; e < a.nnz(); ++e)
                    next[static_cast<std::size_t>(a.cols[e])] += c * u[static_cast<std::size_t>(a.rows[e])];
            }
            std::swap(u, next);
        }
        for (std::size_t t = 0; t < total.size(); ++t) total[t] += u[t];
    }
    return total;
}

std::vector<double> score_all_tails(const DrumModel& model, int head,
                                    std::span<const kg::SparseAdjacency> ops, int x) {
    return score_all_tails(model.coefficients(head), ops, x);
}

double query_loss_value(const CoefficientTensor& coeffs, std::span<const kg::SparseAdjacency> ops, int x,
                        int y, double epsilon_log) {
    std::vector<double> s = score_all_tails(coeffs, ops, x);
    double denom = 0.0;
    for (double v : s) denom += v;
    double n = static_cast<double>(s.size());
    return std::log(denom + n * epsilon_log) - std::log(s[static_cast<std::size_t>(y)] + epsilon_log);
}

} // namespace drum::model
