#include "drum/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <thread>

#include "drum/rng.hpp"

namespace drum::train {

using diff::ParameterSet;
using diff::Tape;
using diff::Tensor;

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("TrainConfig: clip_norm must be > 0");
    if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
    if (threads < 1) throw std::invalid_argument("TrainConfig: threads must be >= 1");
}

AdamState::AdamState(const ParameterSet& params) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        m.emplace_back(params[i].value.rows, params[i].value.cols);
        v.emplace_back(params[i].value.rows, params[i].value.cols);
    }
}

double clip_gradients(ParameterSet& params, double clip_norm) {
    if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_gradients: clip_norm must be > 0");
    double norm = params.grad_norm();
    if (norm > clip_norm) {
        double scale = clip_norm / norm;
        for (std::size_t i = 0; i < params.size(); ++i)
            for (double& g : params[i].grad.data) g *= scale;
    }
    return norm;
}

void adam_step(ParameterSet& params, AdamState& state, double learning_rate) {
    if (state.m.size() != params.size())
        throw ContractError("adam_step: state does not match parameter set");
    state.t += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& val = params[i].value;
        const Tensor& grad = params[i].grad;
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        if (!val.same_shape(grad) || !val.same_shape(m))
            throw ContractError("adam_step: shape mismatch on parameter " + params[i].name);
        for (std::size_t k = 0; k < val.size(); ++k) {
            double g = grad[k];
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
            double mhat = m[k] / bc1;
            double vhat = v[k] / bc2;
            val[k] -= learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

namespace {

struct Query {
    int x;
    int head;
    int y;
};

// Sum of per-query losses over one contiguous chunk, built on one tape.
// Coefficients are generated once per distinct head within the chunk.
double run_chunk(model::DrumModel& model, std::span<const Query> chunk,
                 std::span<const kg::SparseAdjacency> ops, double inv_batch, Tape& tape) {
    std::map<int, model::CoefficientNodes> coeff_cache;
    diff::Node total{};
    bool first = true;
    for (const Query& q : chunk) {
        auto it = coeff_cache.find(q.head);
        if (it == coeff_cache.end()) it = coeff_cache.emplace(q.head, model.coefficient_nodes(tape, q.head)).first;
        diff::Node score = model.score_nodes(tape, it->second, ops, q.x);
        diff::Node loss = model.query_loss_node(tape, score, q.y);
        total = first ? loss : tape.add(total, loss);
        first = false;
    }
    diff::Node scaled = tape.scale_const(inv_batch, total);
    tape.backward(scaled);
    return tape.scalar_value(total);
}

} // namespace

TrainResult train(model::DrumModel& model, const kg::TripleStore& queries,
                  std::span<const kg::SparseAdjacency> facts_ops, const TrainConfig& config,
                  const ValidationFn& validation, const EpochSink& sink) {
    config.validate();
    if (queries.triples.empty()) throw std::invalid_argument("train: empty training store");

    std::vector<Query> order;
    order.reserve(queries.triples.size());
    for (const auto& t : queries.triples) order.push_back(Query{t.s, t.r, t.o});

    ParameterSet& params = model.params();
    AdamState adam(params);
    Rng rng(config.seed ^ 0x7261696e65724aULL);

    TrainResult result;
    double best_mrr = -1.0;
    int best_epoch = -1;
    int stale = 0;
    std::vector<Tensor> best_params;
    auto snapshot = [&]() {
        best_params.clear();
        for (std::size_t i = 0; i < params.size(); ++i) best_params.push_back(params[i].value);
    };
    auto restore = [&]() {
        if (best_params.empty()) return;
        for (std::size_t i = 0; i < params.size(); ++i) params[i].value = best_params[i];
    };

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        Rng erng = rng.fork(static_cast<std::uint64_t>(epoch));
        erng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size),
                                                      order.size() - start);
            std::span<const Query> batch(&order[start], count);
            double inv_batch = 1.0 / static_cast<double>(count);
            params.zero_grad();

            int tapes = std::min<int>(config.threads, static_cast<int>(count));
            std::vector<std::unique_ptr<Tape>> tape_by_chunk;
            std::vector<double> chunk_loss(static_cast<std::size_t>(tapes), 0.0);
            for (int c = 0; c < tapes; ++c) tape_by_chunk.push_back(std::make_unique<Tape>());

            auto chunk_span = [&](int c) {
                std::size_t per = count / static_cast<std::size_t>(tapes);
                std::size_t rem = count % static_cast<std::size_t>(tapes);
                std::size_t begin = static_cast<std::size_t>(c) * per + std::min<std::size_t>(static_cast<std::size_t>(c), rem);
                std::size_t len = per + (static_cast<std::size_t>(c) < rem ? 1 : 0);
                return batch.subspan(begin, len);
            };

            if (tapes == 1) {
                chunk_loss[0] = run_chunk(model, batch, facts_ops, inv_batch, *tape_by_chunk[0]);
            } else {
                std::vector<std::thread> workers;
                workers.reserve(static_cast<std::size_t>(tapes));
                for (int c = 0; c < tapes; ++c)
                    workers.emplace_back([&, c] {
                        chunk_loss[static_cast<std::size_t>(c)] =
                            run_chunk(model, chunk_span(c), facts_ops, inv_batch, *tape_by_chunk[static_cast<std::size_t>(c)]);
                    });
                for (auto& w : workers) w.join();
            }
            // fixed reduction order: chunk 0, 1, ... regardless of finish order
            for (int c = 0; c < tapes; ++c) tape_by_chunk[static_cast<std::size_t>(c)]->accumulate_param_grads();
            for (int c = 0; c < tapes; ++c) loss_sum += chunk_loss[static_cast<std::size_t>(c)];
            seen += count;

            clip_gradients(params, config.clip_norm);
            adam_step(params, adam, config.learning_rate);
        }

        EpochLog log;
        log.epoch = epoch;
        log.mean_loss = loss_sum / static_cast<double>(seen);
        log.queries = seen;
        if (validation) log.val_mrr = validation(model);
        log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(log);
        if (sink) sink(log);

        if (validation) {
            if (*log.val_mrr > best_mrr) {
                best_mrr = *log.val_mrr;
                best_epoch = epoch;
                stale = 0;
                snapshot();
            } else if (++stale >= config.patience) {
                break;
            }
        } else {
            best_epoch = epoch;
        }
    }
    if (validation) restore();
    result.best_epoch = best_epoch;
    return result;
}

} // namespace drum::train
