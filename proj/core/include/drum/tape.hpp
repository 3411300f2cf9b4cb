#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "drum/errors.hpp"
#include "drum/kg.hpp"

namespace drum::diff {

// Dense 64-bit-real matrix, row-major. Vectors are (n x 1).
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {}

    static Tensor scalar(double v) {
        Tensor t(1, 1);
        t.data[0] = v;
        return t;
    }
    static Tensor column(std::vector<double> v) {
        Tensor t;
        t.rows = static_cast<int>(v.size());
        t.cols = 1;
        t.data = std::move(v);
        return t;
    }

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
    std::size_t size() const { return data.size(); }
    bool is_scalar() const { return rows == 1 && cols == 1; }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const { return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")"; }
};

// A named trainable array. Lives outside any tape so it persists across
// batches; tapes reference it by id and accumulate into grad.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    int id = -1;
};

class ParameterSet {
public:
    Parameter& create(const std::string& name, int rows, int cols);
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t size() const { return params_.size(); }
    Parameter& operator[](std::size_t i) { return *params_[i]; }
    const Parameter& operator[](std::size_t i) const { return *params_[i]; }

    void zero_grad();
    double grad_norm() const; // global L2 norm over all parameter gradients
    std::size_t scalar_count() const;

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class OpKind : std::uint8_t {
    constant,
    parameter,
    add,
    sub,
    scale_const,   // c * x
    add_const,     // x + c
    scale_node,    // scalar node * tensor
    mul,           // elementwise
    dot,           // column . column -> scalar
    matvec,        // W (m x k) * x (k x 1); affine builds matvec + add
    concat,        // stack two columns
    row,           // row r of a matrix, as a column
    pick,          // element i of a column, as a scalar
    reduce_sum,    // sum of all elements, as a scalar
    sigmoid,
    tanh_fn,
    softmax,       // max-shifted, column input
    log_guard,     // log(max(x, eps)) elementwise
    spmv_t,        // A^T x for a constant sparse adjacency
    weighted_sum,  // sum_k c[k] * part_k
    graph_step,    // sum_k c[k] * (A_k^T u) over an operator-slot span
};

// Lightweight handle into a tape.
struct Node {
    class Tape* tape = nullptr;
    int idx = -1;
    bool valid() const { return tape != nullptr && idx >= 0; }
};

// Eager forward evaluation with a recorded tape for one reverse sweep.
// Single-threaded; run independent tapes for concurrent work. Double
// backward is not supported and raises ContractError.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Node constant(Tensor value);
    Node scalar(double v) { return constant(Tensor::scalar(v)); }
    Node one_hot(int n, int i);
    Node parameter(Parameter& p);

    Node add(Node a, Node b);
    Node sub(Node a, Node b);
    Node scale_const(double c, Node x);
    Node add_const(double c, Node x);
    Node scale_node(Node s, Node x);
    Node mul(Node a, Node b);
    Node dot(Node a, Node b);
    Node matvec(Node w, Node x);
    Node affine(Node w, Node x, Node b);
    Node concat(Node a, Node b);
    Node row(Node m, int r);
    Node pick(Node v, int i);
    Node reduce_sum(Node v);
    Node sigmoid(Node x);
    Node tanh(Node x);
    Node softmax(Node x);
    Node log_guard(Node x, double eps);
    Node spmv_t(const kg::SparseAdjacency& adj, Node x);
    Node weighted_sum(Node coeffs, const std::vector<Node>& parts);
    Node graph_step(Node coeffs, Node u, std::span<const kg::SparseAdjacency> ops);

    const Tensor& value(Node n) const;
    double scalar_value(Node n) const;
    // Gradient of the last backward() loss w.r.t. a node (zeros if detached).
    const Tensor& grad(Node n) const;

    // Reverse sweep from a scalar loss. Parameter gradients accumulate into
    // tape-local buffers; merge them with accumulate_param_grads.
    void backward(Node loss);
    bool backward_done() const { return backward_done_; }

    // Adds this tape's parameter gradients into Parameter::grad, in
    // parameter-id order (deterministic regardless of tape construction).
    void accumulate_param_grads() const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct NodeRec {
        Tensor value;
        Tensor grad; // allocated lazily during backward
        OpKind op = OpKind::constant;
        int p0 = -1, p1 = -1, p2 = -1; // parent node indices
        std::vector<int> extra_parents;  // weighted_sum tails
        double c = 0.0;                 // scale/add constant or log eps
        int aux = 0;                    // row / pick index
        const kg::SparseAdjacency* adj = nullptr;
        const kg::SparseAdjacency* ops = nullptr; // graph_step slot span
        int ops_count = 0;
        Parameter* param = nullptr;
        bool needs_grad = false;
    };

    int push(NodeRec rec);
    Node wrap(int idx) { return Node{this, idx}; }
    NodeRec& rec(Node n);
    const NodeRec& rec(Node n) const;
    void check_same_tape(Node n) const;
    static void check_same_shape(const char* op, const Tensor& a, const Tensor& b);
    static void check_column(const char* op, const Tensor& t);
    void ensure_grad(int idx);

    std::vector<NodeRec> nodes_;
    std::unordered_map<int, int> param_node_; // one leaf per parameter per tape
    std::vector<std::pair<Parameter*, Tensor>> param_grads_;
    std::unordered_map<int, std::size_t> param_slot_;
    Tensor zero_like_; // returned by grad() for detached nodes
    bool backward_done_ = false;
};

} // namespace drum::diff
