#include "symbiotic/training.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "symbiotic/random.hpp"

namespace symbiotic {

using namespace ad;

std::string to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "sgd_momentum"; }

Optimizer optimizer_from_string(const std::string& s) {
    if (s == "adam") return Optimizer::adam;
    if (s == "sgd_momentum" || s == "sgd") return Optimizer::sgd_momentum;
    throw std::invalid_argument("unknown optimizer: " + s);
}

TrainConfig TrainConfig::victim() { return TrainConfig{}; }

TrainConfig TrainConfig::unrolled() {
    TrainConfig c;
    c.epochs = 100;
    c.optimizer = Optimizer::sgd_momentum;
    c.learning_rate = 0.1;
    c.momentum = 0.9;
    c.early_stopping = false;
    c.dropout = false;
    return c;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("TrainConfig: weight decay must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("TrainConfig: momentum must lie in [0, 1)");
    if (early_stopping && patience > epochs) throw std::invalid_argument("TrainConfig: patience exceeds epochs");
}

TrainingTargets targets_from_splits(const Graph& g, const Splits& splits) {
    TrainingTargets t;
    t.train_nodes = splits.labeled_train;
    for (NodeId v : t.train_nodes) t.train_labels.push_back(g.labels[v]);
    t.validation_nodes = splits.validation;
    for (NodeId v : t.validation_nodes) t.validation_labels.push_back(g.labels[v]);
    return t;
}

namespace {

struct AdamState {
    std::vector<Tensor> m, v;
    std::size_t step = 0;
};

}  // namespace

TrainResult fit(const ModelSpec& spec, const Graph& g, const TrainingTargets& targets, const TrainConfig& config,
                std::uint64_t seed, const CsrPtr& features) {
    config.validate();
    if (config.epochs == 0) {
        TrainResult r;
        r.params = init_model(spec, seed);
        return r;
    }
    if (targets.train_nodes.empty()) throw std::invalid_argument("fit: no labeled training nodes");
    const CsrPtr x = features ? features : make_features(g);
    ModelParams params = init_model(spec, seed);
    const std::uint64_t dropout_stream = derive_seed(seed, 0xd70);

    std::vector<Tensor> velocity;
    AdamState adam;
    for (const auto& t : params.tensors) {
        velocity.emplace_back(t.rows, t.cols);
        adam.m.emplace_back(t.rows, t.cols);
        adam.v.emplace_back(t.rows, t.cols);
    }

    TrainResult result;
    ModelParams best = params;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    const bool stop_early = config.early_stopping && !targets.validation_nodes.empty();

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<Tensor> grads;
        double loss_value = 0.0;
        try {
            Tape tape;
            const auto vars = place(tape, params, true);
            const Adjacency adj = build_adjacency(graph_pairs(tape, g));
            ForwardOptions opt;
            opt.training = config.dropout;
            opt.dropout_seed = derive_seed(dropout_stream, epoch);
            const Var logits = forward(spec, vars, adj, x, opt);
            const Var loss = masked_cross_entropy(logits, targets.train_nodes, targets.train_labels);
            loss_value = loss.value().item();
            if (!std::isfinite(loss_value)) {
                std::ostringstream msg;
                msg << "training diverged: non-finite loss at epoch " << epoch << " (arch " << to_string(spec.arch)
                    << ", lr " << config.learning_rate << ", seed " << seed << ")";
                throw std::runtime_error(msg.str());
            }
            grads = tape.gradients(loss, vars);
        } catch (const std::domain_error& e) {
            // Overflow inside the forward or backward pass.
            throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        }
        result.train_loss.push_back(loss_value);

        for (std::size_t k = 0; k < params.tensors.size(); ++k) {
            Tensor& w = params.tensors[k];
            Tensor& gk = grads[k];
            if (config.weight_decay > 0.0) {
                for (std::size_t i = 0; i < w.size(); ++i) gk.data[i] += config.weight_decay * w.data[i];
            }
            if (config.optimizer == Optimizer::sgd_momentum) {
                Tensor& vel = velocity[k];
                for (std::size_t i = 0; i < w.size(); ++i) {
                    vel.data[i] = vel.data[i] * config.momentum + gk.data[i];
                    w.data[i] -= vel.data[i] * config.learning_rate;
                }
            }
        }
        if (config.optimizer == Optimizer::adam) {
            constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
            ++adam.step;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam.step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam.step));
            for (std::size_t k = 0; k < params.tensors.size(); ++k) {
                Tensor& w = params.tensors[k];
                for (std::size_t i = 0; i < w.size(); ++i) {
                    const double gi = grads[k].data[i];
                    double& m = adam.m[k].data[i];
                    double& v = adam.v[k].data[i];
                    m = beta1 * m + (1.0 - beta1) * gi;
                    v = beta2 * v + (1.0 - beta2) * gi * gi;
                    w.data[i] -= config.learning_rate * (m / c1) / (std::sqrt(v / c2) + eps);
                }
            }
        }

        if (stop_early) {
            Tape tape;
            const auto vars = place(tape, params);
            const Adjacency adj = build_adjacency(graph_pairs(tape, g));
            const Var logits = forward(spec, vars, adj, x);
            const double val = masked_cross_entropy(logits, targets.validation_nodes, targets.validation_labels).value().item();
            if (val < best_val) {
                best_val = val;
                best = params;
                result.best_epoch = epoch;
                since_best = 0;
            } else if (++since_best >= config.patience) {
                break;
            }
        }
    }
    result.params = stop_early ? std::move(best) : std::move(params);
    if (!stop_early) result.best_epoch = config.epochs - 1;
    return result;
}

ModelParams train_victim(const ModelSpec& spec, const Graph& g, const Splits& splits, const TrainConfig& config,
                         std::uint64_t seed) {
    if (splits.labeled_train.empty()) throw std::invalid_argument("train_victim: labeled_train is empty");
    const Graph view = training_view(g, splits);
    return fit(spec, view, targets_from_splits(g, splits), config, seed).params;
}

UnrolledResult unrolled_train(const ModelSpec& spec, const Adjacency& adj, const CsrPtr& features,
                              std::span<const NodeId> train_nodes, std::span<const int> train_labels,
                              const TrainConfig& config, std::uint64_t seed) {
    config.validate();
    if (config.optimizer != Optimizer::sgd_momentum) {
        throw std::invalid_argument("unrolled_train: only sgd_momentum can be unrolled");
    }
    if (config.epochs > config.max_unroll_steps) {
        throw MemoryCapExceeded("unrolled_train: " + std::to_string(config.epochs) + " steps exceed the unroll cap of " +
                                std::to_string(config.max_unroll_steps));
    }
    Tape& tape = adj.normalized.tape();
    UnrolledResult r;
    const ModelParams init = init_model(spec, seed);
    for (const auto& t : init.tensors) r.initial.push_back(tape.variable(t));
    std::vector<Var> theta = r.initial;
    std::vector<Var> velocity;
    const std::size_t bytes_before = tape.value_bytes();

    for (std::size_t step = 0; step < config.epochs; ++step) {
        const Var logits = forward(spec, theta, adj, features);
        const Var loss = masked_cross_entropy(logits, train_nodes, train_labels);
        std::vector<Var> grads = tape.grad(loss, theta);
        for (std::size_t k = 0; k < theta.size(); ++k) {
            Var gk = grads[k];
            if (config.weight_decay > 0.0) gk = add(gk, scale(theta[k], config.weight_decay));
            if (step == 0) {
                velocity.push_back(gk);
            } else {
                velocity[k] = add(scale(velocity[k], config.momentum), gk);
            }
            theta[k] = sub(theta[k], scale(velocity[k], config.learning_rate));
        }
        if (step == 0) {
            const std::size_t per_step = tape.value_bytes() - bytes_before;
            if (per_step * config.epochs > config.memory_cap_bytes) {
                throw MemoryCapExceeded("unrolled_train: projected tape size " +
                                        std::to_string(per_step * config.epochs >> 20) + " MiB exceeds the cap of " +
                                        std::to_string(config.memory_cap_bytes >> 20) + " MiB");
            }
        }
    }
    r.params = std::move(theta);
    return r;
}

ModelParams snapshot(const ModelSpec& spec, std::span<const Var> params) {
    ModelParams m;
    m.spec = spec;
    for (const auto& p : params) m.tensors.push_back(p.value());
    return m;
}

}  // namespace symbiotic
