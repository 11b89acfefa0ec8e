#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "symbiotic/autodiff.hpp"
#include "symbiotic/graph.hpp"

namespace symbiotic {

/// Undirected node pairs carrying one (possibly relaxed) weight each. Pairs are
/// identified by their upper-triangular linear index and kept sorted.
struct WeightedPairs {
    std::size_t num_nodes = 0;
    std::vector<std::uint64_t> keys;
    std::vector<NodeId> u;
    std::vector<NodeId> v;
    ad::Var weights;  // keys.size() x 1

    std::size_t size() const { return keys.size(); }
};

/// Graph edges with constant weight 1.
WeightedPairs graph_pairs(ad::Tape& tape, const Graph& g);

/// Pairs of `base` united with `block_keys`; for block pair k the weight
/// becomes a + (1 - 2a) * p_k where a is the base weight (0 for absent pairs).
/// Block keys must be distinct. An empty block returns `base` unchanged.
WeightedPairs overlay(const WeightedPairs& base, std::span<const std::uint64_t> block_keys, const ad::Var& block_values);

/// GCN normalization D^-1/2 (A + I) D^-1/2 of a weighted pair list. Returns
/// (m + n) x 1 slot weights: the m pair weights followed by n self-loop
/// weights, with deg_i = 1 + sum_j w_ij. Throws on negative weights.
ad::Var normalize_adjacency(const ad::Var& weights, std::span<const NodeId> u, std::span<const NodeId> v,
                            std::size_t num_nodes);

/// Plain-value counterpart of normalize_adjacency.
std::vector<double> normalize_adjacency_values(std::span<const double> weights, std::span<const NodeId> u,
                                               std::span<const NodeId> v, std::size_t num_nodes);

/// Message-passing inputs shared by all architectures.
struct Adjacency {
    std::size_t num_nodes = 0;
    PatternPtr pattern;  // both directions of every pair, then self-loops
    ad::Var normalized;  // GCN-normalized slot weights
    ad::Var raw;         // raw pair weights followed by self-loop weight 1
};

Adjacency build_adjacency(const WeightedPairs& pairs);

}  // namespace symbiotic
