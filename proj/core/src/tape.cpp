#include "drum/tape.hpp"

#include <algorithm>
#include <cmath>

namespace drum::diff {

Parameter& ParameterSet::create(const std::string& name, int rows, int cols) {
    if (index_.count(name)) throw ContractError("ParameterSet: duplicate parameter '" + name + "'");
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = Tensor(rows, cols);
    p->grad = Tensor(rows, cols);
    p->id = static_cast<int>(params_.size());
    index_.emplace(name, params_.size());
    params_.push_back(std::move(p));
    return *params_.back();
}

Parameter& ParameterSet::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParameterSet: no parameter '" + name + "'");
    return *params_[it->second];
}

const Parameter& ParameterSet::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParameterSet: no parameter '" + name + "'");
    return *params_[it->second];
}

bool ParameterSet::contains(const std::string& name) const { return index_.count(name) > 0; }

void ParameterSet::zero_grad() {
    for (auto& p : params_) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

double ParameterSet::grad_norm() const {
    double sq = 0.0;
    for (const auto& p : params_)
        for (double g : p->grad.data) sq += g * g;
    return std::sqrt(sq);
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
}

int Tape::push(NodeRec r) {
    nodes_.push_back(std::move(r));
    return static_cast<int>(nodes_.size()) - 1;
}

Tape::NodeRec& Tape::rec(Node n) {
    check_same_tape(n);
    return nodes_[static_cast<std::size_t>(n.idx)];
}

const Tape::NodeRec& Tape::rec(Node n) const {
    check_same_tape(n);
    return nodes_[static_cast<std::size_t>(n.idx)];
}

void Tape::check_same_tape(Node n) const {
    if (n.tape != this || n.idx < 0 || n.idx >= static_cast<int>(nodes_.size()))
        throw ContractError("Tape: node does not belong to this tape");
}

void Tape::check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

void Tape::check_column(const char* op, const Tensor& t) {
    if (t.cols != 1) throw DimensionError(std::string(op) + ": expected a column vector, got " + t.shape_str());
}

Node Tape::constant(Tensor value) {
    NodeRec r;
    r.value = std::move(value);
    r.op = OpKind::constant;
    r.needs_grad = false;
    return wrap(push(std::move(r)));
}

Node Tape::one_hot(int n, int i) {
    if (i < 0 || i >= n) throw std::out_of_range("one_hot: index " + std::to_string(i) + " out of [0," + std::to_string(n) + ")");
    Tensor t(n, 1);
    t.data[static_cast<std::size_t>(i)] = 1.0;
    return constant(std::move(t));
}

Node Tape::parameter(Parameter& p) {
    auto it = param_node_.find(p.id);
    if (it != param_node_.end()) return wrap(it->second);
    NodeRec r;
    r.value = p.value;
    r.op = OpKind::parameter;
    r.param = &p;
    r.needs_grad = true;
    int idx = push(std::move(r));
    param_node_.emplace(p.id, idx);
    return wrap(idx);
}

Node Tape::add(Node a, Node b) {
    const auto& ra = rec(a);
    const auto& rb = rec(b);
    check_same_shape("add", ra.value, rb.value);
    NodeRec r;
    r.value = ra.value;
    for (std::size_t i = 0; i < r.value.size(); ++i) r.value[i] += rb.value[i];
    r.op = OpKind::add;
    r.p0 = a.idx;
    r.p1 = b.idx;
    r.needs_grad = ra.needs_grad || rb.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::sub(Node a, Node b) {
    const auto& ra = rec(a);
    const auto& rb = rec(b);
    check_same_shape("sub", ra.value, rb.value);
    NodeRec r;
    r.value = ra.value;
    for (std::size_t i = 0; i < r.value.size(); ++i) r.value[i] -= rb.value[i];
    r.op = OpKind::sub;
    r.p0 = a.idx;
    r.p1 = b.idx;
    r.needs_grad = ra.needs_grad || rb.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::scale_const(double c, Node x) {
    const auto& rx = rec(x);
    NodeRec r;
    r.value = rx.value;
    for (double& v : r.value.data) v *= c;
    r.op = OpKind::scale_const;
    r.p0 = x.idx;
    r.c = c;
    r.needs_grad = rx.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::add_const(double c, Node x) {
    const auto& rx = rec(x);
    NodeRec r;
    r.value = rx.value;
    for (double& v : r.value.data) v += c;
    r.op = OpKind::add_const;
    r.p0 = x.idx;
    r.c = c;
    r.needs_grad = rx.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::scale_node(Node s, Node x) {
    const auto& rs = rec(s);
    const auto& rx = rec(x);
    if (!rs.value.is_scalar())
        throw DimensionError("scale_node: scale must be a scalar, got " + rs.value.shape_str());
    NodeRec r;
    r.value = rx.value;
    double c = rs.value[0];
    for (double& v : r.value.data) v *= c;
    r.op = OpKind::scale_node;
    r.p0 = s.idx;
    r.p1 = x.idx;
    r.needs_grad = rs.needs_grad || rx.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::mul(Node a, Node b) {
    const auto& ra = rec(a);
    const auto& rb = rec(b);
    check_same_shape("mul", ra.value, rb.value);
    NodeRec r;
    r.value = ra.value;
    for (std::size_t i = 0; i < r.value.size(); ++i) r.value[i] *= rb.value[i];
    r.op = OpKind::mul;
    r.p0 = a.idx;
    r.p1 = b.idx;
    r.needs_grad = ra.needs_grad || rb.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::dot(Node a, Node b) {
    const auto& ra = rec(a);
    const auto& rb = rec(b);
    check_column("dot", ra.value);
    check_same_shape("dot", ra.value, rb.value);
    double s = 0.0;
    for (std::size_t i = 0; i < ra.value.size(); ++i) s += ra.value[i] * rb.value[i];
    NodeRec r;
    r.value = Tensor::scalar(s);
    r.op = OpKind::dot;
    r.p0 = a.idx;
    r.p1 = b.idx;
    r.needs_grad = ra.needs_grad || rb.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::matvec(Node w, Node x) {
    const auto& rw = rec(w);
    const auto& rx = rec(x);
    check_column("matvec", rx.value);
    if (rw.value.cols != rx.value.rows)
        throw DimensionError("matvec: shape mismatch " + rw.value.shape_str() + " vs " + rx.value.shape_str());
    NodeRec r;
    r.value = Tensor(rw.value.rows, 1);
    for (int i = 0; i < rw.value.rows; ++i) {
        double s = 0.0;
        const double* wrow = &rw.value.data[static_cast<std::size_t>(i) * static_cast<std::size_t>(rw.value.cols)];
        for (int j = 0; j < rw.value.cols; ++j) s += wrow[j] * rx.value[static_cast<std::size_t>(j)];
        r.value[static_cast<std::size_t>(i)] = s;
    }
    r.op = OpKind::matvec;
    r.p0 = w.idx;
    r.p1 = x.idx;
    r.needs_grad = rw.needs_grad || rx.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::affine(Node w, Node x, Node b) {
    Node wx = matvec(w, x);
    const auto& rb = rec(b);
    check_same_shape("affine", rec(wx).value, rb.value);
    NodeRec r;
    r.value = rec(wx).value;
    for (std::size_t i = 0; i < r.value.size(); ++i) r.value[i] += rb.value[i];
    r.op = OpKind::add;
    r.p0 = wx.idx;
    r.p1 = b.idx;
    r.needs_grad = rec(wx).needs_grad || rb.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::concat(Node a, Node b) {
    const auto& ra = rec(a);
    const auto& rb = rec(b);
    check_column("concat", ra.value);
    check_column("concat", rb.value);
    NodeRec r;
    r.value = Tensor(ra.value.rows + rb.value.rows, 1);
    std::copy(ra.value.data.begin(), ra.value.data.end(), r.value.data.begin());
    std::copy(rb.value.data.begin(), rb.value.data.end(), r.value.data.begin() + ra.value.rows);
    r.op = OpKind::concat;
    r.p0 = a.idx;
    r.p1 = b.idx;
    r.needs_grad = ra.needs_grad || rb.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::row(Node m, int rix) {
    const auto& rm = rec(m);
    if (rix < 0 || rix >= rm.value.rows)
        throw std::out_of_range("row: index " + std::to_string(rix) + " out of [0," + std::to_string(rm.value.rows) + ")");
    NodeRec r;
    r.value = Tensor(rm.value.cols, 1);
    for (int j = 0; j < rm.value.cols; ++j) r.value[static_cast<std::size_t>(j)] = rm.value.at(rix, j);
    r.op = OpKind::row;
    r.p0 = m.idx;
    r.aux = rix;
    r.needs_grad = rm.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::pick(Node v, int i) {
    const auto& rv = rec(v);
    check_column("pick", rv.value);
    if (i < 0 || i >= rv.value.rows)
        throw std::out_of_range("pick: index " + std::to_string(i) + " out of [0," + std::to_string(rv.value.rows) + ")");
    NodeRec r;
    r.value = Tensor::scalar(rv.value[static_cast<std::size_t>(i)]);
    r.op = OpKind::pick;
    r.p0 = v.idx;
    r.aux = i;
    r.needs_grad = rv.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::reduce_sum(Node v) {
    const auto& rv = rec(v);
    double s = 0.0;
    for (double x : rv.value.data) s += x;
    NodeRec r;
    r.value = Tensor::scalar(s);
    r.op = OpKind::reduce_sum;
    r.p0 = v.idx;
    r.needs_grad = rv.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::sigmoid(Node x) {
    const auto& rx = rec(x);
    NodeRec r;
    r.value = rx.value;
    for (double& v : r.value.data) v = 1.0 / (1.0 + std::exp(-v));
    r.op = OpKind::sigmoid;
    r.p0 = x.idx;
    r.needs_grad = rx.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::tanh(Node x) {
    const auto& rx = rec(x);
    NodeRec r;
    r.value = rx.value;
    for (double& v : r.value.data) v = std::tanh(v);
    r.op = OpKind::tanh_fn;
    r.p0 = x.idx;
    r.needs_grad = rx.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::softmax(Node x) {
    const auto& rx = rec(x);
    check_column("softmax", rx.value);
    NodeRec r;
    r.value = rx.value;
    double mx = *std::max_element(r.value.data.begin(), r.value.data.end());
    double denom = 0.0;
    for (double& v : r.value.data) {
        v = std::exp(v - mx);
        denom += v;
    }
    for (double& v : r.value.data) v /= denom;
    r.op = OpKind::softmax;
    r.p0 = x.idx;
    r.needs_grad = rx.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::log_guard(Node x, double eps) {
    const auto& rx = rec(x);
    NodeRec r;
    r.value = rx.value;
    for (double& v : r.value.data) v = std::log(std::max(v, eps));
    r.op = OpKind::log_guard;
    r.p0 = x.idx;
    r.c = eps;
    r.needs_grad = rx.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::spmv_t(const kg::SparseAdjacency& adj, Node x) {
    const auto& rx = rec(x);
    check_column("spmv_t", rx.value);
    if (rx.value.rows != adj.n)
        throw DimensionError("spmv_t: operator dimension (" + std::to_string(adj.n) + "x" + std::to_string(adj.n) +
                             ") vs vector " + rx.value.shape_str());
    NodeRec r;
    r.value = Tensor(adj.n, 1);
    for (std::size_t e = 0; e < adj.nnz(); ++e)
        r.value[static_cast<std::size_t>(adj.cols[e])] += rx.value[static_cast<std::size_t>(adj.rows[e])];
    r.op = OpKind::spmv_t;
    r.p0 = x.idx;
    r.adj = &adj;
    r.needs_grad = rx.needs_grad;
    return wrap(push(std::move(r)));
}

Node Tape::weighted_sum(Node coeffs, const std::vector<Node>& parts) {
    const auto& rc = rec(coeffs);
    check_column("weighted_sum", rc.value);
    if (static_cast<std::size_t>(rc.value.rows) != parts.size())
        throw DimensionError("weighted_sum: " + std::to_string(rc.value.rows) + " coefficients vs " +
                             std::to_string(parts.size()) + " parts");
    if (parts.empty()) throw ContractError("weighted_sum: no parts");
    NodeRec r;
    r.value = Tensor(rec(parts[0]).value.rows, 1);
    r.needs_grad = rc.needs_grad;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& rp = rec(parts[k]);
        check_same_shape("weighted_sum", r.value, rp.value);
        double c = rc.value[k];
        for (std::size_t i = 0; i < r.value.size(); ++i) r.value[i] += c * rp.value[i];
        r.needs_grad = r.needs_grad || rp.needs_grad;
    }
    r.op = OpKind::weighted_sum;
    r.p0 = coeffs.idx;
    r.extra_parents.reserve(parts.size());
    for (Node p : parts) r.extra_parents.push_back(p.idx);
    return wrap(push(std::move(r)));
}

Node Tape::graph_step(Node coeffs, Node u, std::span<const kg::SparseAdjacency> ops) {
    const auto& rc = rec(coeffs);
    const auto& ru = rec(u);
    check_column("graph_step", rc.value);
    check_column("graph_step", ru.value);
    if (static_cast<std::size_t>(rc.value.rows) != ops.size())
        throw DimensionError("graph_step: " + std::to_string(rc.value.rows) + " coefficients vs " +
                             std::to_string(ops.size()) + " operators");
    NodeRec r;
    r.value = Tensor(ru.value.rows, 1);
    for (std::size_t k = 0; k < ops.size(); ++k) {
        const auto& a = ops[k];
        if (a.n != ru.value.rows)
            throw DimensionError("graph_step: operator dimension (" + std::to_string(a.n) + ") vs state " +
                                 ru.value.shape_str());
        double c = rc.value[k];
        if (c == 0.0) continue;
        for (std::size_t e = 0; e < a.nnz(); ++e)
            r.value[static_cast<std::size_t>(a.cols[e])] += c * ru.value[static_cast<std::size_t>(a.rows[e])];
    }
    r.op = OpKind::graph_step;
    r.p0 = coeffs.idx;
    r.p1 = u.idx;
    r.ops = ops.data();
    r.ops_count = static_cast<int>(ops.size());
    r.needs_grad = rc.needs_grad || ru.needs_grad;
    return wrap(push(std::move(r)));
}

const Tensor& Tape::value(Node n) const { return rec(n).value; }

double Tape::scalar_value(Node n) const {
    const auto& r = rec(n);
    if (!r.value.is_scalar()) throw ContractError("scalar_value: node is " + r.value.shape_str());
    return r.value[0];
}

const Tensor& Tape::grad(Node n) const {
    const auto& r = rec(n);
    if (r.grad.size() == 0) {
        if (zero_like_.rows != r.value.rows || zero_like_.cols != r.value.cols)
            const_cast<Tape*>(this)->zero_like_ = Tensor(r.value.rows, r.value.cols);
        return zero_like_;
    }
    return r.grad;
}

void Tape::ensure_grad(int idx) {
    auto& r = nodes_[static_cast<std::size_t>(idx)];
    if (r.grad.size() == 0) r.grad = Tensor(r.value.rows, r.value.cols);
}

void Tape::backward(Node loss) {
    const auto& rl = rec(loss);
    if (!rl.value.is_scalar())
        throw ContractError("backward: loss must be a scalar, got " + rl.value.shape_str());
    if (backward_done_) throw ContractError("backward: tape already swept; double backward is unsupported");
    backward_done_ = true;
    ensure_grad(loss.idx);
    nodes_[static_cast<std::size_t>(loss.idx)].grad[0] = 1.0;

    for (int i = loss.idx; i >= 0; --i) {
        auto& r = nodes_[static_cast<std::size_t>(i)];
        if (!r.needs_grad || r.grad.size() == 0) continue;
        const Tensor& g = r.grad;
        auto parent_needs = [&](int p) { return p >= 0 && nodes_[static_cast<std::size_t>(p)].needs_grad; };
        auto pgrad = [&](int p) -> Tensor& {
            ensure_grad(p);
            return nodes_[static_cast<std::size_t>(p)].grad;
        };
        auto pval = [&](int p) -> const Tensor& { return nodes_[static_cast<std::size_t>(p)].value; };

        switch (r.op) {
        case OpKind::constant:
            break;
        case OpKind::parameter: {
            auto it = param_slot_.find(r.param->id);
            if (it == param_slot_.end()) {
                param_slot_.emplace(r.param->id, param_grads_.size());
                param_grads_.emplace_back(r.param, Tensor(r.value.rows, r.value.cols));
                it = param_slot_.find(r.param->id);
            }
            Tensor& pg = param_grads_[it->second].second;
            for (std::size_t k = 0; k < g.size(); ++k) pg[k] += g[k];
            break;
        }
        case OpKind::add:
            if (parent_needs(r.p0)) {
                Tensor& pg = pgrad(r.p0);
                for (std::size_t k = 0; k < g.size(); ++k) pg[k] += g[k];
            }
            if (parent_needs(r.p1)) {
                Tensor& pg = pgrad(r.p1);
                for (std::size_t k = 0; k < g.size(); ++k) pg[k] += g[k];
            }
            break;
        case OpKind::sub:
            if (parent_needs(r.p0)) {
                Tensor& pg = pgrad(r.p0);
                for (std::size_t k = 0; k < g.size(); ++k) pg[k] += g[k];
            }
            if (parent_needs(r.p1)) {
                Tensor& pg = pgrad(r.p1);
                for (std::size_t k = 0; k < g.size(); ++k) pg[k] -= g[k];
            }
            break;
        case OpKind::scale_const:
            if (parent_needs(r.p0)) {
                Tensor& pg = pgrad(r.p0);
                for (std::size_t k = 0; k < g.size(); ++k) pg[k] += r.c * g[k];
            }
            break;
        case OpKind::add_const:
            if (parent_needs(r.p0)) {
                Tensor& pg = pgrad(r.p0);
                for (std::size_t k = 0; k < g.size(); ++k) pg[k] += g[k];
            }
            break;
        case OpKind::scale_node: {
            double s = pval(r.p0)[0];
            const Tensor& x = pval(r.p1);
            if (parent_needs(r.p0)) {
                double acc = 0.0;
                for (std::size_t k = 0; k < g.size(); ++k) acc += g[k] * x[k];
                pgrad(r.p0)[0] += acc;
            }
            if (parent_needs(r.p1)) {
                Tensor& pg = pgrad(r.p1);
                for (std::size_t k = 0; k < g.size(); ++k) pg[k] += s * g[k];
            }
            break;
        }
        case OpKind::mul: {
            const Tensor& a = pval(r.p0);
            const Tensor& b = pval(r.p1);
            if (parent_needs(r.p0)) {
                Tensor& pg = pgrad(r.p0);
                for (std::size_t k = 0; k < g.size(); ++k) pg[k] += g[k] * b[k];
            }
            if (parent_needs(r.p1)) {
                Tensor& pg = pgrad(r.p1);
                for (std::size_t k = 0; k < g.size(); ++k) pg[k] += g[k] * a[k];
            }
            break;
        }
        case OpKind::dot: {
            double s = g[0];
            const Tensor& a = pval(r.p0);
            const Tensor& b = pval(r.p1);
            if (parent_needs(r.p0)) {
                Tensor& pg = pgrad(r.p0);
                for (std::size_t k = 0; k < a.size(); ++k) pg[k] += s * b[k];
            }
            if (parent_needs(r.p1)) {
                Tensor& pg = pgrad(r.p1);
                for (std::size_t k = 0; k < b.size(); ++k) pg[k] += s * a[k];
            }
            break;
        }
        case OpKind::matvec: {
            const Tensor& w = pval(r.p0);
            const Tensor& x = pval(r.p1);
            if (parent_needs(r.p0)) {
                Tensor& pg = pgrad(r.p0);
                for (int i2 = 0; i2 < w.rows; ++i2) {
                    double gi = g[static_cast<std::size_t>(i2)];
                    if (gi == 0.0) continue;
                    double* prow = &pg.data[static_cast<std::size_t>(i2) * static_cast<std::size_t>(w.cols)];
                    for (int j = 0; j < w.cols; ++j) prow[j] += gi * x[static_cast<std::size_t>(j)];
                }
            }
            if (parent_needs(r.p1)) {
                Tensor& pg = pgrad(r.p1);
                for (int i2 = 0; i2 < w.rows; ++i2) {
                    double gi = g[static_cast<std::size_t>(i2)];
                    if (gi == 0.0) continue;
                    const double* wrow = &w.data[static_cast<std::size_t>(i2) * static_cast<std::size_t>(w.cols)];
                    for (int j = 0; j < w.cols; ++j) pg[static_cast<std::size_t>(j)] += gi * wrow[j];
                }
            }
            break;
        }
        case OpKind::concat: {
            int n0 = pval(r.p0).rows;
            if (parent_needs(r.p0)) {
                Tensor& pg = pgrad(r.p0);
                for (int k = 0; k < n0; ++k) pg[static_cast<std::size_t>(k)] += g[static_cast<std::size_t>(k)];
            }
            if (parent_needs(r.p1)) {
                Tensor& pg = pgrad(r.p1);
                for (int k = 0; k < pval(r.p1).rows; ++k)
                    pg[static_cast<std::size_t>(k)] += g[static_cast<std::size_t>(n0 + k)];
            }
            break;
        }
        case OpKind::row:
            if (parent_needs(r.p0)) {
                Tensor& pg = pgrad(r.p0);
                for (int j = 0; j < pg.cols; ++j) pg.at(r.aux, j) += g[static_cast<std::size_t>(j)];
            }
            break;
        case OpKind::pick:
            if (parent_needs(r.p0)) pgrad(r.p0)[static_cast<std::size_t>(r.aux)] += g[0];
            break;
        case OpKind::reduce_sum:
            if (parent_needs(r.p0)) {
                Tensor& pg = pgrad(r.p0);
                for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += g[0];
            }
            break;
        case OpKind::sigmoid:
            if (parent_needs(r.p0)) {
                Tensor& pg = pgrad(r.p0);
                for (std::size_t k = 0; k < g.size(); ++k) {
                    double y = r.value[k];
                    pg[k] += g[k] * y * (1.0 - y);
                }
            }
            break;
        case OpKind::tanh_fn:
            if (parent_needs(r.p0)) {
                Tensor& pg = pgrad(r.p0);
                for (std::size_t k = 0; k < g.size(); ++k) {
                    double y = r.value[k];
                    pg[k] += g[k] * (1.0 - y * y);
                }
            }
            break;
        case OpKind::softmax:
            if (parent_needs(r.p0)) {
                Tensor& pg = pgrad(r.p0);
                double yg = 0.0;
                for (std::size_t k = 0; k < g.size(); ++k) yg += r.value[k] * g[k];
                for (std::size_t k = 0; k < g.size(); ++k) pg[k] += r.value[k] * (g[k] - yg);
            }
            break;
        case OpKind::log_guard:
            if (parent_needs(r.p0)) {
                Tensor& pg = pgrad(r.p0);
                const Tensor& x = pval(r.p0);
                for (std::size_t k = 0; k < g.size(); ++k)
                    if (x[k] > r.c) pg[k] += g[k] / x[k];
            }
            break;
        case OpKind::spmv_t:
            if (parent_needs(r.p0)) {
                Tensor& pg = pgrad(r.p0);
                const auto& a = *r.adj;
                for (std::size_t e = 0; e < a.nnz(); ++e)
                    pg[static_cast<std::size_t>(a.rows[e])] += g[static_cast<std::size_t>(a.cols[e])];
            }
            break;
        case OpKind::weighted_sum: {
            const Tensor& c = pval(r.p0);
            bool coeff_needs = parent_needs(r.p0);
            for (std::size_t k = 0; k < r.extra_parents.size(); ++k) {
                int p = r.extra_parents[k];
                const Tensor& part = pval(p);
                if (coeff_needs) {
                    double acc = 0.0;
                    for (std::size_t t = 0; t < g.size(); ++t) acc += g[t] * part[t];
                    pgrad(r.p0)[k] += acc;
                }
                if (parent_needs(p)) {
                    Tensor& pg = pgrad(p);
                    double ck = c[k];
                    for (std::size_t t = 0; t < g.size(); ++t) pg[t] += ck * g[t];
                }
            }
            break;
        }
        case OpKind::graph_step: {
            const Tensor& c = pval(r.p0);
            const Tensor& u = pval(r.p1);
            bool cg = parent_needs(r.p0);
            bool ug = parent_needs(r.p1);
            if (!cg && !ug) break;
            Tensor* cgrad = cg ? &pgrad(r.p0) : nullptr;
            Tensor* ugrad = ug ? &pgrad(r.p1) : nullptr;
            for (int k = 0; k < r.ops_count; ++k) {
                const auto& a = r.ops[k];
                double ck = c[static_cast<std::size_t>(k)];
                double acc = 0.0;
                for (std::size_t e = 0; e < a.nnz(); ++e) {
                    auto row = static_cast<std::size_t>(a.rows[e]);
                    auto col = static_cast<std::size_t>(a.cols[e]);
                    double gout = g[col];
                    if (cg) acc += u[row] * gout;
                    if (ug) ugrad->data[row] += ck * gout;
                }
                if (cg) cgrad->data[static_cast<std::size_t>(k)] += acc;
            }
            break;
        }
        }
    }
}

void Tape::accumulate_param_grads() const {
    if (!backward_done_) throw ContractError("accumulate_param_grads: run backward first");
    std::vector<const std::pair<Parameter*, Tensor>*> ordered;
    ordered.reserve(param_grads_.size());
    for (const auto& pg : param_grads_) ordered.push_back(&pg);
    std::sort(ordered.begin(), ordered.end(),
              [](auto* a, auto* b) { return a->first->id < b->first->id; });
    for (auto* pg : ordered) {
        Tensor& dst = pg->first->grad;
        const Tensor& src = pg->second;
        for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
    }
}

} // namespace drum::diff
