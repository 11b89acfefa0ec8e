#include "symbiotic/synthetic.hpp"

#include <stdexcept>

#include "symbiotic/random.hpp"

namespace symbiotic {

Graph make_csbm(const CsbmConfig& cfg, std::uint64_t seed) {
    if (cfg.num_nodes == 0 || cfg.num_classes == 0) throw std::invalid_argument("make_csbm: empty graph");
    if (cfg.feature_dim < cfg.num_classes) throw std::invalid_argument("make_csbm: fewer features than classes");
    Rng rng(seed);
    const std::size_t n = cfg.num_nodes;
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % cfg.num_classes);

    std::vector<NodePair> pairs;
    for (NodeId i = 0; i < n; ++i) {
        for (NodeId j = i + 1; j < n; ++j) {
            if (rng.bernoulli(labels[i] == labels[j] ? cfg.p_in : cfg.p_out)) pairs.emplace_back(i, j);
        }
    }
    const std::size_t block = cfg.feature_dim / cfg.num_classes;
    Tensor features(n, cfg.feature_dim);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t own = static_cast<std::size_t>(labels[i]) * block;
        for (std::size_t f = 0; f < cfg.feature_dim; ++f) {
            const bool mine = f >= own && f < own + block;
            if (rng.bernoulli(mine ? cfg.q_in : cfg.q_out)) features(i, f) = 1.0;
        }
    }
    return make_graph(n, cfg.num_classes, pairs, std::move(features), std::move(labels), "csbm");
}

}  // namespace symbiotic
