#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "symbiotic/graph.hpp"
#include "symbiotic/models.hpp"

namespace symbiotic {

enum class Optimizer { adam, sgd_momentum };

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);

struct TrainConfig {
    std::size_t epochs = 200;
    Optimizer optimizer = Optimizer::adam;
    double learning_rate = 0.01;
    double weight_decay = 5e-4;
    double momentum = 0.9;
    bool early_stopping = true;
    std::size_t patience = 50;
    bool dropout = true;
    // Limits for unrolled (differentiable) training.
    std::size_t max_unroll_steps = 1000;
    std::size_t memory_cap_bytes = std::size_t{3} << 30;

    /// Adam, lr 0.01, weight decay 5e-4, 200 epochs, patience 50, dropout on.
    static TrainConfig victim();
    /// SGD with momentum 0.9, lr 0.1, 100 steps, no early stopping, dropout off.
    static TrainConfig unrolled();

    void validate() const;
};

class MemoryCapExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Nodes and labels a model is fitted on.
struct TrainingTargets {
    std::vector<NodeId> train_nodes;
    std::vector<int> train_labels;
    std::vector<NodeId> validation_nodes;  // may be empty: disables early stopping
    std::vector<int> validation_labels;
};

TrainingTargets targets_from_splits(const Graph& g, const Splits& splits);

struct TrainResult {
    ModelParams params;
    std::vector<double> train_loss;  // one entry per completed epoch
    std::size_t best_epoch = 0;
};

/// Standard (non-differentiable) training on a fixed discrete graph. The
/// graph is used as given; see train_victim for split-aware training.
TrainResult fit(const ModelSpec& spec, const Graph& g, const TrainingTargets& targets, const TrainConfig& config,
                std::uint64_t seed, const CsrPtr& features = nullptr);

/// Trains on the training view of `g` (inductive mode drops test-incident
/// edges) using the labeled train nodes, early stopping on validation loss.
ModelParams train_victim(const ModelSpec& spec, const Graph& g, const Splits& splits, const TrainConfig& config,
                         std::uint64_t seed);

struct UnrolledResult {
    std::vector<ad::Var> initial;  // theta_0 (tape variables)
    std::vector<ad::Var> params;   // theta after `epochs` steps, differentiable
};

/// Runs config.epochs steps of SGD with momentum entirely on the tape of
/// `adj`, so the returned parameters can be differentiated w.r.t. the
/// adjacency weights. Dropout is never applied.
UnrolledResult unrolled_train(const ModelSpec& spec, const Adjacency& adj, const CsrPtr& features,
                              std::span<const NodeId> train_nodes, std::span<const int> train_labels,
                              const TrainConfig& config, std::uint64_t seed);

/// Values of differentiable parameters as a plain ModelParams.
ModelParams snapshot(const ModelSpec& spec, std::span<const ad::Var> params);

}  // namespace symbiotic
