#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "symbiotic/graph.hpp"
#include "symbiotic/models.hpp"
#include "symbiotic/random.hpp"
#include "symbiotic/training.hpp"

namespace symbiotic {

enum class LossKind { cross_entropy, tanh_margin };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

struct AttackConfig {
    std::size_t iterations = 125;
    std::size_t block_size = 0;  // 0: min(250000, number of candidate pairs)
    double base_lr = 0.0;        // 0: 100 / num_nodes
    LossKind evasion_loss = LossKind::tanh_margin;
    LossKind poisoning_loss = LossKind::cross_entropy;
    std::size_t final_samples = 100;
    double keep_threshold = 1e-7;
    double projection_tol = 1e-10;
    double alpha = 0.5;                 // poisoning share of a symbiotic budget
    std::size_t inner_iterations = 10;  // joint attack only
    TrainConfig unrolled = TrainConfig::unrolled();
    TrainConfig surrogate = TrainConfig::victim();
    std::size_t workers = 1;  // threads for final-sample evaluation

    void validate() const;
};

/// Candidate node pairs of an attack: every pair of the graph, or only the
/// pairs among a sorted node subset. Local indices enumerate the subset's
/// upper triangle; keys are the corresponding global tri indices.
struct PairSpace {
    std::size_t num_nodes = 0;
    std::vector<NodeId> nodes;  // empty: all nodes

    static PairSpace all(std::size_t n) { return PairSpace{n, {}}; }
    static PairSpace among(std::size_t n, std::vector<NodeId> subset);

    std::uint64_t size() const;
    std::uint64_t key(std::uint64_t local) const;
    NodePair pair(std::uint64_t local) const;
};

/// `b` distinct indices drawn uniformly without replacement from [0, universe)
/// minus `exclude`. Throws std::invalid_argument if b + |exclude| > universe.
std::vector<std::uint64_t> sample_block(std::uint64_t universe, std::size_t b, std::span<const std::uint64_t> exclude,
                                        Rng& rng);
std::vector<std::uint64_t> sample_block(std::uint64_t universe, std::size_t b, std::span<const std::uint64_t> exclude,
                                        std::uint64_t seed);

/// Euclidean projection onto {x in [0,1]^k : sum x <= budget} by bisection on
/// the shift mu.
std::vector<double> project(std::span<const double> values, double budget, double tol = 1e-10);

struct PerturbationState {
    std::vector<std::uint64_t> indices;  // local indices into the PairSpace
    std::vector<double> values;
    std::size_t budget = 0;
    std::uint64_t base_graph = 0;
    Rng rng{0};

    std::size_t size() const { return indices.size(); }
    double mass() const;
};

PerturbationState init_state(const PairSpace& space, const Graph& g, std::size_t budget, std::size_t block_size,
                             std::uint64_t seed);

/// Global tri keys of the block, aligned with state.values.
std::vector<std::uint64_t> block_keys(const PerturbationState& state, const PairSpace& space);

/// Pair weights of `g` with the block applied as flip probabilities.
WeightedPairs relaxed_weights(const WeightedPairs& base, const PerturbationState& state, const PairSpace& space,
                              const ad::Var& block_values);

/// Ascent step, projection, then eviction of entries below keep_threshold;
/// evicted slots are refilled with fresh indices at value 0. Throws
/// std::logic_error if the projected state breaks the budget.
void resample_step(PerturbationState& state, std::span<const double> gradient, double step_size, const PairSpace& space,
                   double keep_threshold = 1e-7, double tol = 1e-10);

/// base_lr * max(budget, 1) / sqrt(t), t >= 1.
double step_size_schedule(double base_lr, std::size_t budget, std::size_t t);

/// Value to maximize. Cross-entropy: mean CE on `nodes`. Tanh-margin: mean of
/// tanh(best wrong logit - true logit).
ad::Var attack_loss(const ad::Var& logits, std::span<const int> labels, std::span<const NodeId> nodes, LossKind kind);
double attack_loss_value(const Tensor& logits, std::span<const int> labels, std::span<const NodeId> nodes, LossKind kind);

using LossEval = std::function<double(const EdgeFlipSet&)>;

/// Draws `samples` Bernoulli realizations of the block, drops those with
/// more than `budget` flips and returns the one with the highest loss_eval
/// (first drawn on ties). If all are dropped, returns the top-`budget`
/// positive entries by value.
EdgeFlipSet sample_final(const PerturbationState& state, const PairSpace& space, const Graph& g, std::size_t budget,
                         std::size_t samples, const LossEval& loss_eval, std::uint64_t seed, std::size_t workers = 1);

// ---------------------------------------------------------------------------

/// Per-iteration trace, for diagnostics and tests.
struct AttackTrace {
    std::vector<double> loss;
    std::vector<double> mass;
};

/// PR-BCD against fixed params; loss on the test nodes of `splits` using
/// g.labels. The whole graph is attackable.
EdgeFlipSet evasion_attack(const ModelParams& params, const Graph& g, const Splits& splits, std::size_t budget,
                           const AttackConfig& cfg, std::uint64_t seed, AttackTrace* trace = nullptr);

/// Poisoning target set: test nodes (transductive) or the non-test unlabeled
/// nodes (inductive, where test nodes are absent during training).
std::vector<NodeId> poisoning_targets(const Splits& splits);

/// Meta-gradient PR-BCD through unrolled training on the training view of `g`.
EdgeFlipSet poison_attack(const ModelSpec& spec, const Graph& g, const Splits& splits, std::size_t budget,
                          const AttackConfig& cfg, std::uint64_t seed, AttackTrace* trace = nullptr);

/// Seed poison_attack(..., seed) retrains cfg.surrogate with when scoring
/// its final samples.
std::uint64_t poison_retrain_seed(std::uint64_t seed);

struct SymbioticFlips {
    EdgeFlipSet poison;   // relative to the received graph
    EdgeFlipSet evasion;  // relative to the poisoned graph
};

/// floor(alpha * budget).
std::size_t poison_share(std::size_t budget, double alpha);

/// Poisoning with floor(alpha * budget), then evasion with the rest against
/// a surrogate retrained on the poisoned graph with `surrogate_seed`.
SymbioticFlips sequential_attack(const ModelSpec& spec, const Graph& g, const Splits& splits, std::size_t budget,
                                 const AttackConfig& cfg, std::uint64_t seed, std::uint64_t surrogate_seed);

/// Like sequential_attack, but every poisoning iteration scores the unrolled
/// model on a graph carrying an inner evasion of cfg.inner_iterations steps.
SymbioticFlips joint_attack(const ModelSpec& spec, const Graph& g, const Splits& splits, std::size_t budget,
                            const AttackConfig& cfg, std::uint64_t seed, std::uint64_t surrogate_seed,
                            AttackTrace* trace = nullptr);

// ---------------------------------------------------------------------------
// Flip CSV: one section per stage, each opened by a provenance comment
//   # base_graph=<16 hex digits> stage=<name> budget=<n> seed=<n>
// followed by `i,j` lines.

struct FlipRecord {
    std::string stage;
    std::size_t budget = 0;
    std::uint64_t seed = 0;
    EdgeFlipSet flips;
};

void write_flips(std::ostream& out, std::span<const FlipRecord> records);
std::vector<FlipRecord> read_flips(std::istream& in);

}  // namespace symbiotic
