#include "symbiotic/attack.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "symbiotic/parallel.hpp"

namespace symbiotic {

using namespace ad;

namespace {

// Seed streams. Sequential and joint attacks share them, which is what makes
// the joint attack with zero inner iterations reproduce the sequential one.
constexpr std::uint64_t kBlockStream = 10;
constexpr std::uint64_t kUnrollStream = 11;
constexpr std::uint64_t kFinalStream = 12;
constexpr std::uint64_t kRetrainStream = 13;
constexpr std::uint64_t kInnerStream = 14;
constexpr std::uint64_t kPoisonStage = 1;
constexpr std::uint64_t kEvasionStage = 3;

constexpr std::size_t kDefaultBlock = 250000;

std::vector<int> labels_of(const Graph& g, std::span<const NodeId> nodes) {
    std::vector<int> out;
    out.reserve(nodes.size());
    for (NodeId v : nodes) out.push_back(g.labels.at(v));
    return out;
}

double base_lr_for(const AttackConfig& cfg, std::size_t n) {
    return cfg.base_lr > 0.0 ? cfg.base_lr : 100.0 / static_cast<double>(std::max<std::size_t>(n, 1));
}

}  // namespace

std::string to_string(LossKind k) { return k == LossKind::cross_entropy ? "cross_entropy" : "tanh_margin"; }

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "cross_entropy" || s == "ce") return LossKind::cross_entropy;
    if (s == "tanh_margin" || s == "margin") return LossKind::tanh_margin;
    throw std::invalid_argument("unknown loss kind: " + s);
}

void AttackConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("AttackConfig: alpha must lie in [0, 1]");
    if (final_samples == 0) throw std::invalid_argument("AttackConfig: final sample count must be positive");
    if (keep_threshold < 0.0) throw std::invalid_argument("AttackConfig: negative keep threshold");
    if (!(projection_tol > 0.0)) throw std::invalid_argument("AttackConfig: projection tolerance must be positive");
    if (base_lr < 0.0) throw std::invalid_argument("AttackConfig: negative step size");
    if (unrolled.optimizer != Optimizer::sgd_momentum) {
        throw std::invalid_argument("AttackConfig: unrolled training must use sgd_momentum");
    }
    unrolled.validate();
    surrogate.validate();
}

// ---------------------------------------------------------------------------

PairSpace PairSpace::among(std::size_t n, std::vector<NodeId> subset) {
    std::sort(subset.begin(), subset.end());
    subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
    if (!subset.empty() && subset.back() >= n) throw std::out_of_range("PairSpace: node out of range");
    return PairSpace{n, std::move(subset)};
}

std::uint64_t PairSpace::size() const { return num_pairs(nodes.empty() ? num_nodes : nodes.size()); }

NodePair PairSpace::pair(std::uint64_t local) const {
    if (nodes.empty()) return tri_decode(local, num_nodes);
    const auto [a, b] = tri_decode(local, nodes.size());
    return {nodes[a], nodes[b]};
}

std::uint64_t PairSpace::key(std::uint64_t local) const {
    if (nodes.empty()) return local;
    const auto [i, j] = pair(local);
    return tri_encode(i, j, num_nodes);
}

std::vector<std::uint64_t> sample_block(std::uint64_t universe, std::size_t b, std::span<const std::uint64_t> exclude,
                                        Rng& rng) {
    std::unordered_set<std::uint64_t> excluded;
    for (auto x : exclude) {
        if (x < universe) excluded.insert(x);
    }
    if (b + excluded.size() > universe) {
        throw std::invalid_argument("sample_block: block of " + std::to_string(b) + " does not fit " +
                                    std::to_string(universe - excluded.size()) + " free indices");
    }
    std::vector<std::uint64_t> out;
    if (universe <= 4 * (b + excluded.size())) {
        // Dense: partial Fisher-Yates over the free indices.
        std::vector<std::uint64_t> pool;
        pool.reserve(universe - excluded.size());
        for (std::uint64_t i = 0; i < universe; ++i) {
            if (!excluded.count(i)) pool.push_back(i);
        }
        for (std::size_t i = 0; i < b; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(b);
        return pool;
    }
    std::unordered_set<std::uint64_t> chosen;
    out.reserve(b);
    while (out.size() < b) {
        const std::uint64_t x = rng.below(universe);
        if (excluded.count(x) || !chosen.insert(x).second) continue;
        out.push_back(x);
    }
    return out;
}

std::vector<std::uint64_t> sample_block(std::uint64_t universe, std::size_t b, std::span<const std::uint64_t> exclude,
                                        std::uint64_t seed) {
    Rng rng(seed);
    return sample_block(universe, b, exclude, rng);
}

std::vector<double> project(std::span<const double> values, double budget, double tol) {
    if (budget < 0.0) throw std::invalid_argument("project: negative budget");
    std::vector<double> out(values.size());
    auto shifted_sum = [&](double mu) {
        double s = 0.0;
        for (double v : values) s += std::clamp(v - mu, 0.0, 1.0);
        return s;
    };
    if (shifted_sum(0.0) <= budget) {
        for (std::size_t i = 0; i < values.size(); ++i) out[i] = std::clamp(values[i], 0.0, 1.0);
        return out;
    }
    double lo = 0.0;
    double hi = *std::max_element(values.begin(), values.end());
    double mu = hi;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double s = shifted_sum(mid);
        if (std::abs(s - budget) <= tol) {
            mu = mid;
            break;
        }
        if (s > budget) {
            lo = mid;
        } else {
            hi = mid;
        }
        mu = hi;
    }
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = std::clamp(values[i] - mu, 0.0, 1.0);
    return out;
}

double PerturbationState::mass() const { return std::accumulate(values.begin(), values.end(), 0.0); }

PerturbationState init_state(const PairSpace& space, const Graph& g, std::size_t budget, std::size_t block_size,
                             std::uint64_t seed) {
    PerturbationState s;
    s.budget = budget;
    s.base_graph = g.id();
    s.rng = Rng(seed);
    const std::uint64_t universe = space.size();
    const std::size_t b = static_cast<std::size_t>(
        std::min<std::uint64_t>(block_size == 0 ? kDefaultBlock : block_size, universe));
    s.indices = sample_block(universe, b, {}, s.rng);
    s.values.assign(b, 0.0);
    return s;
}

std::vector<std::uint64_t> block_keys(const PerturbationState& state, const PairSpace& space) {
    std::vector<std::uint64_t> keys;
    keys.reserve(state.indices.size());
    for (auto i : state.indices) keys.push_back(space.key(i));
    return keys;
}

WeightedPairs relaxed_weights(const WeightedPairs& base, const PerturbationState& state, const PairSpace& space,
                              const Var& block_values) {
    return overlay(base, block_keys(state, space), block_values);
}

void resample_step(PerturbationState& state, std::span<const double> gradient, double step_size, const PairSpace& space,
                   double keep_threshold, double tol) {
    if (gradient.size() != state.values.size()) throw std::invalid_argument("resample_step: gradient size mismatch");
    std::vector<double> updated(state.values.size());
    for (std::size_t i = 0; i < updated.size(); ++i) updated[i] = state.values[i] + step_size * gradient[i];
    state.values = project(updated, static_cast<double>(state.budget), tol);

    double total = 0.0;
    for (double v : state.values) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::logic_error("resample_step: projected value outside [0, 1]");
        total += v;
    }
    if (total > static_cast<double>(state.budget) + 1e-9) {
        throw std::logic_error("resample_step: projected mass exceeds the budget");
    }

    std::vector<std::uint64_t> survivors;
    std::vector<std::size_t> evicted;
    for (std::size_t i = 0; i < state.values.size(); ++i) {
        if (state.values[i] >= keep_threshold) {
            survivors.push_back(state.indices[i]);
        } else {
            evicted.push_back(i);
        }
    }
    if (evicted.empty()) return;
    const auto fresh = sample_block(space.size(), evicted.size(), survivors, state.rng);
    for (std::size_t k = 0; k < evicted.size(); ++k) {
        state.indices[evicted[k]] = fresh[k];
        state.values[evicted[k]] = 0.0;
    }
}

double step_size_schedule(double base_lr, std::size_t budget, std::size_t t) {
    if (t == 0) throw std::invalid_argument("step_size_schedule: iterations count from 1");
    return base_lr * static_cast<double>(std::max<std::size_t>(budget, 1)) / std::sqrt(static_cast<double>(t));
}

namespace {

std::vector<std::uint32_t> best_wrong_class(const Tensor& logits, std::span<const int> labels,
                                            std::span<const NodeId> nodes) {
    if (logits.cols < 2) throw std::invalid_argument("attack_loss: margin loss needs two or more classes");
    std::vector<std::uint32_t> out(nodes.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const auto row = logits.row(nodes[k]);
        std::size_t best = labels[k] == 0 ? 1 : 0;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (static_cast<int>(c) != labels[k] && row[c] > row[best]) best = c;
        }
        out[k] = static_cast<std::uint32_t>(best);
    }
    return out;
}

void check_loss_inputs(std::span<const int> labels, std::span<const NodeId> nodes) {
    if (nodes.empty()) throw std::invalid_argument("attack_loss: empty node set");
    if (labels.size() != nodes.size()) throw std::invalid_argument("attack_loss: one label per node required");
}

}  // namespace

Var attack_loss(const Var& logits, std::span<const int> labels, std::span<const NodeId> nodes, LossKind kind) {
    check_loss_inputs(labels, nodes);
    if (kind == LossKind::cross_entropy) return masked_cross_entropy(logits, nodes, labels);
    const auto wrong = best_wrong_class(logits.value(), labels, nodes);
    std::vector<std::uint32_t> rows(nodes.begin(), nodes.end());
    std::vector<std::uint32_t> truth(labels.begin(), labels.end());
    const Var margin = sub(pick(logits, rows, wrong), pick(logits, rows, std::move(truth)));
    return scale(sum_all(ad::tanh(margin)), 1.0 / static_cast<double>(nodes.size()));
}

double attack_loss_value(const Tensor& logits, std::span<const int> labels, std::span<const NodeId> nodes,
                         LossKind kind) {
    check_loss_inputs(labels, nodes);
    double total = 0.0;
    if (kind == LossKind::cross_entropy) {
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            const auto row = logits.row(nodes[k]);
            const double mx = *std::max_element(row.begin(), row.end());
            double s = 0.0;
            for (double z : row) s += std::exp(z - mx);
            total += mx + std::log(s) - row[static_cast<std::size_t>(labels[k])];
        }
    } else {
        const auto wrong = best_wrong_class(logits, labels, nodes);
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            const auto row = logits.row(nodes[k]);
            total += std::tanh(row[wrong[k]] - row[static_cast<std::size_t>(labels[k])]);
        }
    }
    return total / static_cast<double>(nodes.size());
}

EdgeFlipSet sample_final(const PerturbationState& state, const PairSpace& space, const Graph& g, std::size_t budget,
                         std::size_t samples, const LossEval& loss_eval, std::uint64_t seed, std::size_t workers) {
    if (samples == 0) throw std::invalid_argument("sample_final: need at least one sample");
    EdgeFlipSet out;
    out.relative_to = g.id();
    if (budget == 0) return out;

    // Distinct admissible realizations in order of first appearance.
    Rng rng(seed);
    std::map<std::vector<std::uint64_t>, std::size_t> seen;
    std::vector<std::vector<std::uint64_t>> candidates;
    for (std::size_t k = 0; k < samples; ++k) {
        std::vector<std::uint64_t> picked;
        for (std::size_t i = 0; i < state.values.size(); ++i) {
            if (rng.uniform() < state.values[i]) picked.push_back(state.indices[i]);
        }
        if (picked.size() > budget) continue;
        std::sort(picked.begin(), picked.end());
        if (seen.emplace(picked, candidates.size()).second) candidates.push_back(std::move(picked));
    }

    auto to_flips = [&](const std::vector<std::uint64_t>& locals) {
        EdgeFlipSet f;
        f.relative_to = g.id();
        for (auto l : locals) f.flips.push_back(space.pair(l));
        std::sort(f.flips.begin(), f.flips.end());
        return f;
    };

    if (candidates.empty()) {
        std::vector<std::size_t> order(state.values.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return state.values[a] > state.values[b]; });
        std::vector<std::uint64_t> top;
        for (std::size_t k = 0; k < order.size() && top.size() < budget; ++k) {
            if (state.values[order[k]] > 0.0) top.push_back(state.indices[order[k]]);
        }
        return to_flips(top);
    }

    std::vector<EdgeFlipSet> sets;
    sets.reserve(candidates.size());
    for (const auto& c : candidates) sets.push_back(to_flips(c));
    std::vector<double> losses(sets.size());
    parallel_for(sets.size(), workers, [&](std::size_t i) { losses[i] = loss_eval(sets[i]); });
    std::size_t best = 0;
    for (std::size_t i = 1; i < losses.size(); ++i) {
        if (losses[i] > losses[best]) best = i;
    }
    return std::move(sets[best]);
}

// ---------------------------------------------------------------------------

EdgeFlipSet evasion_attack(const ModelParams& params, const Graph& g, const Splits& splits, std::size_t budget,
                           const AttackConfig& cfg, std::uint64_t seed, AttackTrace* trace) {
    cfg.validate();
    EdgeFlipSet none;
    none.relative_to = g.id();
    if (budget == 0) return none;
    if (splits.test.empty()) throw std::invalid_argument("evasion_attack: no test nodes");

    const std::vector<NodeId>& targets = splits.test;
    const std::vector<int> labels = labels_of(g, targets);
    const PairSpace space = PairSpace::all(g.num_nodes);
    const CsrPtr x = make_features(g);
    const double lr = base_lr_for(cfg, g.num_nodes);
    PerturbationState state = init_state(space, g, budget, cfg.block_size, derive_seed(seed, kBlockStream));

    for (std::size_t t = 1; t <= cfg.iterations; ++t) {
        Tape tape;
        const Var p = tape.variable(Tensor::column(state.values));
        const Adjacency adj = build_adjacency(relaxed_weights(graph_pairs(tape, g), state, space, p));
        const auto theta = place(tape, params);
        const Var loss = attack_loss(forward(params.spec, theta, adj, x), labels, targets, cfg.evasion_loss);
        const auto grad = tape.gradients(loss, std::vector<Var>{p});
        if (trace) {
            trace->loss.push_back(loss.value().item());
            trace->mass.push_back(state.mass());
        }
        resample_step(state, grad[0].data, step_size_schedule(lr, budget, t), space, cfg.keep_threshold,
                      cfg.projection_tol);
    }

    const LossEval eval = [&](const EdgeFlipSet& flips) {
        return attack_loss_value(predict_logits(params, apply_flips(g, flips), x), labels, targets, cfg.evasion_loss);
    };
    return sample_final(state, space, g, budget, cfg.final_samples, eval, derive_seed(seed, kFinalStream), cfg.workers);
}

std::vector<NodeId> poisoning_targets(const Splits& splits) {
    return splits.mode == SplitMode::transductive ? splits.test : splits.non_test_unlabeled();
}

namespace {

struct InnerEvasion {
    std::size_t iterations = 0;
    std::size_t budget = 0;
};

// Runs the inner evasion on a fresh tape against fixed values of the unrolled
// params and the relaxed poisoned weights; returns the final relaxed values.
PerturbationState run_inner_evasion(const ModelSpec& spec, std::span<const Var> theta, const WeightedPairs& poisoned,
                                    const Graph& view, const PairSpace& space, const CsrPtr& x,
                                    std::span<const NodeId> targets, std::span<const int> labels,
                                    const InnerEvasion& inner, const AttackConfig& cfg, std::uint64_t seed) {
    PerturbationState state = init_state(space, view, inner.budget, cfg.block_size, seed);
    const double lr = base_lr_for(cfg, view.num_nodes);
    const ModelParams fixed = snapshot(spec, theta);
    for (std::size_t s = 1; s <= inner.iterations; ++s) {
        Tape tape;
        WeightedPairs base = poisoned;
        base.weights = tape.constant(poisoned.weights.value());
        const Var q = tape.variable(Tensor::column(state.values));
        const Adjacency adj = build_adjacency(relaxed_weights(base, state, space, q));
        const Var loss = attack_loss(forward(spec, place(tape, fixed), adj, x), labels, targets, cfg.evasion_loss);
        const auto grad = tape.gradients(loss, std::vector<Var>{q});
        resample_step(state, grad[0].data, step_size_schedule(lr, inner.budget, s), space, cfg.keep_threshold,
                      cfg.projection_tol);
    }
    return state;
}

EdgeFlipSet poison_core(const ModelSpec& spec, const Graph& g, const Splits& splits, std::size_t budget,
                        const AttackConfig& cfg, std::uint64_t seed, const InnerEvasion* inner, AttackTrace* trace) {
    cfg.validate();
    EdgeFlipSet none;
    none.relative_to = g.id();
    if (budget == 0) return none;

    const Graph view = training_view(g, splits);
    const std::vector<NodeId> targets = poisoning_targets(splits);
    if (targets.empty()) throw std::invalid_argument("poison_attack: no target nodes");
    const std::vector<int> labels = labels_of(g, targets);
    const TrainingTargets train = targets_from_splits(g, splits);
    if (train.train_nodes.empty()) throw std::invalid_argument("poison_attack: no labeled training nodes");

    PairSpace space = PairSpace::all(g.num_nodes);
    if (splits.mode == SplitMode::inductive) {
        std::vector<NodeId> present;
        std::vector<bool> is_test(g.num_nodes, false);
        for (NodeId v : splits.test) is_test[v] = true;
        for (NodeId v = 0; v < g.num_nodes; ++v) {
            if (!is_test[v]) present.push_back(v);
        }
        space = PairSpace::among(g.num_nodes, std::move(present));
    }

    const CsrPtr x = make_features(view);
    const double lr = base_lr_for(cfg, g.num_nodes);
    const std::uint64_t unroll_seed = derive_seed(seed, kUnrollStream);
    const std::uint64_t inner_seed = derive_seed(seed, kInnerStream);
    PerturbationState state = init_state(space, view, budget, cfg.block_size, derive_seed(seed, kBlockStream));

    for (std::size_t t = 1; t <= cfg.iterations; ++t) {
        Tape tape;
        const Var p = tape.variable(Tensor::column(state.values));
        const WeightedPairs poisoned = relaxed_weights(graph_pairs(tape, view), state, space, p);
        const Adjacency adj = build_adjacency(poisoned);
        const UnrolledResult model =
            unrolled_train(spec, adj, x, train.train_nodes, train.train_labels, cfg.unrolled, unroll_seed);
        Var logits;
        if (inner && inner->iterations > 0 && inner->budget > 0) {
            const PerturbationState ev = run_inner_evasion(spec, model.params, poisoned, view, space, x, targets,
                                                           labels, *inner, cfg, derive_seed(inner_seed, t));
            const WeightedPairs evaded =
                relaxed_weights(poisoned, ev, space, tape.constant(Tensor::column(ev.values)));
            logits = forward(spec, model.params, build_adjacency(evaded), x);
        } else {
            logits = forward(spec, model.params, adj, x);
        }
        const Var loss = attack_loss(logits, labels, targets, cfg.poisoning_loss);
        const auto grad = tape.gradients(loss, std::vector<Var>{p});
        if (trace) {
            trace->loss.push_back(loss.value().item());
            trace->mass.push_back(state.mass());
        }
        resample_step(state, grad[0].data, step_size_schedule(lr, budget, t), space, cfg.keep_threshold,
                      cfg.projection_tol);
    }

    const std::uint64_t retrain_seed = derive_seed(seed, kRetrainStream);
    const LossEval eval = [&](const EdgeFlipSet& flips) {
        const Graph h = apply_flips(view, flips);
        const ModelParams m = fit(spec, h, train, cfg.surrogate, retrain_seed, x).params;
        return attack_loss_value(predict_logits(m, h, x), labels, targets, cfg.poisoning_loss);
    };
    EdgeFlipSet flips =
        sample_final(state, space, view, budget, cfg.final_samples, eval, derive_seed(seed, kFinalStream), cfg.workers);
    flips.relative_to = g.id();
    return flips;
}

SymbioticFlips symbiotic(const ModelSpec& spec, const Graph& g, const Splits& splits, std::size_t budget,
                         const AttackConfig& cfg, std::uint64_t seed, std::uint64_t surrogate_seed,
                         const InnerEvasion* inner, AttackTrace* trace) {
    const std::size_t poison_budget = poison_share(budget, cfg.alpha);
    const std::size_t evasion_budget = budget - poison_budget;
    SymbioticFlips out;
    out.poison = poison_core(spec, g, splits, poison_budget, cfg, derive_seed(seed, kPoisonStage), inner, trace);
    const Graph poisoned = apply_flips(g, out.poison);
    out.evasion.relative_to = poisoned.id();
    if (evasion_budget == 0) return out;
    const ModelParams surrogate = train_victim(spec, poisoned, splits, cfg.surrogate, surrogate_seed);
    out.evasion = evasion_attack(surrogate, poisoned, splits, evasion_budget, cfg, derive_seed(seed, kEvasionStage));
    return out;
}

}  // namespace

EdgeFlipSet poison_attack(const ModelSpec& spec, const Graph& g, const Splits& splits, std::size_t budget,
                          const AttackConfig& cfg, std::uint64_t seed, AttackTrace* trace) {
    return poison_core(spec, g, splits, budget, cfg, seed, nullptr, trace);
}

std::uint64_t poison_retrain_seed(std::uint64_t seed) { return derive_seed(seed, kRetrainStream); }

std::size_t poison_share(std::size_t budget, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("poison_share: alpha must lie in [0, 1]");
    return std::min(budget, static_cast<std::size_t>(std::floor(alpha * static_cast<double>(budget) + 1e-9)));
}

SymbioticFlips sequential_attack(const ModelSpec& spec, const Graph& g, const Splits& splits, std::size_t budget,
                                 const AttackConfig& cfg, std::uint64_t seed, std::uint64_t surrogate_seed) {
    return symbiotic(spec, g, splits, budget, cfg, seed, surrogate_seed, nullptr, nullptr);
}

SymbioticFlips joint_attack(const ModelSpec& spec, const Graph& g, const Splits& splits, std::size_t budget,
                            const AttackConfig& cfg, std::uint64_t seed, std::uint64_t surrogate_seed,
                            AttackTrace* trace) {
    const InnerEvasion inner{cfg.inner_iterations, budget - poison_share(budget, cfg.alpha)};
    return symbiotic(spec, g, splits, budget, cfg, seed, surrogate_seed, &inner, trace);
}

// ---------------------------------------------------------------------------

void write_flips(std::ostream& out, std::span<const FlipRecord> records) {
    for (const auto& r : records) {
        char id[17];
        std::snprintf(id, sizeof id, "%016llx", static_cast<unsigned long long>(r.flips.relative_to));
        out << "# base_graph=" << id << " stage=" << r.stage << " budget=" << r.budget << " seed=" << r.seed << '\n';
        for (const auto& [i, j] : r.flips.flips) out << i << ',' << j << '\n';
    }
}

namespace {

template <typename T>
T parse_number(std::string_view s, int base, const char* what) {
    T value{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value, base);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw std::runtime_error(std::string("flip file: bad ") + what + " '" + std::string(s) + "'");
    }
    return value;
}

}  // namespace

std::vector<FlipRecord> read_flips(std::istream& in) {
    std::vector<FlipRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            FlipRecord r;
            std::istringstream fields(line.substr(1));
            std::string field;
            while (fields >> field) {
                const auto eq = field.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = field.substr(0, eq);
                const std::string_view value(field.c_str() + eq + 1);
                if (key == "base_graph") r.flips.relative_to = parse_number<std::uint64_t>(value, 16, "graph id");
                if (key == "stage") r.stage = std::string(value);
                if (key == "budget") r.budget = parse_number<std::size_t>(value, 10, "budget");
                if (key == "seed") r.seed = parse_number<std::uint64_t>(value, 10, "seed");
            }
            out.push_back(std::move(r));
            continue;
        }
        if (out.empty()) throw std::runtime_error("flip file: pair before any header at line " + std::to_string(lineno));
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("flip file: expected i,j at line " + std::to_string(lineno));
        const auto i = parse_number<NodeId>(std::string_view(line).substr(0, comma), 10, "node");
        const auto j = parse_number<NodeId>(std::string_view(line).substr(comma + 1), 10, "node");
        out.back().flips.flips.emplace_back(i, j);
    }
    return out;
}

}  // namespace symbiotic
