#pragma once

#include <cstdint>

#include "symbiotic/graph.hpp"

namespace symbiotic {

/// Contextual stochastic block model with binary features. Nodes get classes
/// round-robin; pairs connect with probability p_in within a class and p_out
/// across classes. Every class owns a disjoint block of feature_dim/classes
/// features; a node sets each feature of its own block with probability
/// q_in and every other feature with probability q_out.
struct CsbmConfig {
    std::size_t num_nodes = 200;
    std::size_t num_classes = 3;
    std::size_t feature_dim = 60;
    double p_in = 0.05;
    double p_out = 0.005;
    double q_in = 0.2;
    double q_out = 0.02;
};

Graph make_csbm(const CsbmConfig& cfg, std::uint64_t seed);

}  // namespace symbiotic
