#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "drum/kg.hpp"
#include "drum/model.hpp"

namespace drum::train {

struct TrainConfig {
    double learning_rate = 0.001;
    int batch_size = 64;
    int max_epochs = 10;
    double clip_norm = 5.0;
    int patience = 5;
    std::uint64_t seed = 0;
    int threads = 1; // tapes per batch when > 1; reduction order stays fixed

    void validate() const;
};

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t t = 0;
    std::vector<diff::Tensor> m;
    std::vector<diff::Tensor> v;

    explicit AdamState(const diff::ParameterSet& params);
};

// Scales all gradients by clip_norm/norm when the global L2 norm exceeds
// clip_norm; returns the pre-clip norm.
double clip_gradients(diff::ParameterSet& params, double clip_norm);

// Canonical Adam update with bias correction; increments state.t.
void adam_step(diff::ParameterSet& params, AdamState& state, double learning_rate);

struct EpochLog {
    int epoch = 0;
    double mean_loss = 0.0;
    std::optional<double> val_mrr;
    double seconds = 0.0;
    std::size_t queries = 0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    int best_epoch = -1; // epoch whose parameters the model ends up with
};

// Computed by the caller against the current parameters (validation MRR).
using ValidationFn = std::function<double(const model::DrumModel&)>;
using EpochSink = std::function<void(const EpochLog&)>;

// Mini-batch optimization of the query loss over seeded-shuffled epochs.
// queries must be the augmented training store (each raw triple and its
// inverse twin, so both query directions are visited once per epoch);
// facts_ops are the operator slots built from the facts partition only.
TrainResult train(model::DrumModel& model, const kg::TripleStore& queries,
                  std::span<const kg::SparseAdjacency> facts_ops, const TrainConfig& config,
                  const ValidationFn& validation = nullptr, const EpochSink& sink = nullptr);

} // namespace drum::train
