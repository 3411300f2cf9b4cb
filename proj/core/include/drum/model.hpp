#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "drum/kg.hpp"
#include "drum/tape.hpp"

namespace drum::model {

struct ModelConfig {
    int max_rule_length = 2;  // T
    int rank = 4;             // L
    int hidden_dim = 128;
    int embed_dim = 128;
    int operator_count = 0;   // |R|+1 including the identity slot
    double epsilon_log = 1e-10;
    std::uint64_t seed = 0;

    void validate() const;
};

// a[j][i][k]: rank j in 0..L-1, step i in 0..T-1, operator slot k in
// 0..K-1 where slot 0 is the identity. Slices produced by the model are
// softmax-normalized over k; tensors built from rule lists may be
// sub-normalized (step-one rows scale by the rule confidence).
struct CoefficientTensor {
    int L = 0;
    int T = 0;
    int K = 0;
    std::vector<double> a;

    CoefficientTensor() = default;
    CoefficientTensor(int l, int t, int k)
        : L(l), T(t), K(k), a(static_cast<std::size_t>(l) * t * k, 0.0) {}

    double& at(int j, int i, int k) {
        return a[(static_cast<std::size_t>(j) * T + static_cast<std::size_t>(i)) * K + static_cast<std::size_t>(k)];
    }
    double at(int j, int i, int k) const {
        return a[(static_cast<std::size_t>(j) * T + static_cast<std::size_t>(i)) * K + static_cast<std::size_t>(k)];
    }
    std::span<const double> slice(int j, int i) const {
        return {&a[(static_cast<std::size_t>(j) * T + static_cast<std::size_t>(i)) * K], static_cast<std::size_t>(K)};
    }
};

// Coefficient vectors as live nodes, one (K x 1) node per (rank, step).
struct CoefficientNodes {
    int L = 0;
    int T = 0;
    std::vector<diff::Node> nodes; // L*T, row-major by rank

    diff::Node at(int j, int i) const { return nodes[static_cast<std::size_t>(j) * T + static_cast<std::size_t>(i)]; }
};

// Head-relation embeddings, L bidirectional gated recurrent cell pairs, and
// a shared output layer that maps concatenated hidden pairs to operator
// logits. No entity parameters anywhere.
class DrumModel {
public:
    DrumModel(ModelConfig config, int head_count);

    const ModelConfig& config() const { return config_; }
    int head_count() const { return head_count_; }
    diff::ParameterSet& params() { return params_; }
    const diff::ParameterSet& params() const { return params_; }

    // Runs the bidirectional recurrences for one head on the given tape and
    // returns softmax-normalized coefficient nodes.
    CoefficientNodes coefficient_nodes(diff::Tape& tape, int head) const;

    // Forward-only evaluation into a plain tensor.
    CoefficientTensor coefficients(int head) const;

    // score = sum_j u_T^(j) with u_i = sum_k a[j][i][k] (A_k^T u_{i-1}),
    // u_0 = one-hot of x. Entry y is then v_x^T Omega v_y.
    diff::Node score_nodes(diff::Tape& tape, const CoefficientNodes& coeffs,
                           std::span<const kg::SparseAdjacency> ops, int x) const;

    // loss = -log((s_y + eps) / (sum(s) + n*eps)), nonnegative and finite.
    diff::Node query_loss_node(diff::Tape& tape, diff::Node score, int true_tail) const;

private:
    struct Cell {
        diff::Parameter *Wi, *Ui, *bi;
        diff::Parameter *Wf, *Uf, *bf;
        diff::Parameter *Wo, *Uo, *bo;
        diff::Parameter *Wg, *Ug, *bg;
    };
    struct CellNodes {
        diff::Node Wi, Ui, bi, Wf, Uf, bf, Wo, Uo, bo, Wg, Ug, bg;
    };

    Cell make_cell(const std::string& prefix);
    void init_params();

    ModelConfig config_;
    int head_count_;
    diff::ParameterSet params_;
    diff::Parameter* head_embeddings_ = nullptr;
    std::vector<Cell> fwd_cells_; // one per rank
    std::vector<Cell> bwd_cells_;
    diff::Parameter* out_w_ = nullptr;
    diff::Parameter* out_b_ = nullptr;
};

// Numeric scoring path used by evaluation and mining; matches the tape
// computation to floating-point roundoff.
std::vector<double> score_all_tails(const CoefficientTensor& coeffs,
                                    std::span<const kg::SparseAdjacency> ops, int x);

// Convenience wrapper: coefficients for head, then numeric scoring.
std::vector<double> score_all_tails(const DrumModel& model, int head,
                                    std::span<const kg::SparseAdjacency> ops, int x);

double query_loss_value(const CoefficientTensor& coeffs, std::span<const kg::SparseAdjacency> ops, int x,
                        int y, double epsilon_log);

} // namespace drum::model
