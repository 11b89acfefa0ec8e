#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "symbiotic/tensor.hpp"

namespace symbiotic {

using NodeId = std::uint32_t;
using NodePair = std::pair<NodeId, NodeId>;

/// Undirected simple graph with node features and labels. Edges are stored
/// once as (i, j) with i < j, sorted and duplicate-free.
struct Graph {
    std::string name;
    std::size_t num_nodes = 0;
    std::size_t num_classes = 0;
    std::vector<NodePair> edges;
    Tensor features;  // num_nodes x feature_dim
    std::vector<int> labels;

    std::size_t num_edges() const { return edges.size(); }
    std::size_t feature_dim() const { return features.cols; }
    bool has_edge(NodeId i, NodeId j) const;
    /// Stable 64-bit fingerprint of node count and edge list.
    std::uint64_t id() const;
    /// Throws std::invalid_argument on any broken invariant.
    void validate() const;
};

/// Builds a graph from an arbitrary pair list: pairs are symmetrized,
/// deduplicated and self-loops dropped.
Graph make_graph(std::size_t num_nodes, std::size_t num_classes, const std::vector<NodePair>& pairs, Tensor features,
                 std::vector<int> labels, std::string name = {});

// ---------------------------------------------------------------------------
// Upper-triangular linear indices over the n(n-1)/2 node pairs i < j,
// enumerated row-major.

std::uint64_t num_pairs(std::size_t n);
std::uint64_t tri_encode(NodeId i, NodeId j, std::size_t n);
NodePair tri_decode(std::uint64_t k, std::size_t n);

// ---------------------------------------------------------------------------

struct EdgeFlipSet {
    std::vector<NodePair> flips;
    std::uint64_t relative_to = 0;

    std::size_t size() const { return flips.size(); }
    bool empty() const { return flips.empty(); }
};

/// Toggles every listed pair. Throws on duplicates or invalid pairs.
Graph apply_flips(const Graph& g, const EdgeFlipSet& flips);

/// Removes every edge whose endpoint feature sets have Jaccard similarity <= tau.
/// Features must be binary.
Graph jaccard_purify(const Graph& g, double tau = 0.0);
double jaccard_similarity(const Graph& g, NodeId i, NodeId j);

/// floor(fraction * undirected edge count).
std::size_t budget_from_fraction(const Graph& g, double fraction);

// ---------------------------------------------------------------------------

enum class SplitMode { transductive, inductive };

struct Splits {
    std::vector<NodeId> labeled_train;
    std::vector<NodeId> unlabeled_train;
    std::vector<NodeId> validation;
    std::vector<NodeId> test;
    SplitMode mode = SplitMode::transductive;

    /// Nodes the attacker may target before test time (everything but test).
    std::vector<NodeId> non_test_unlabeled() const;
};

Splits make_splits(const Graph& g, std::size_t labeled_per_class, double test_fraction, SplitMode mode,
                   std::uint64_t seed);

/// Graph as seen during training: in inductive mode every edge incident to a
/// test node is removed (test nodes are added after training).
Graph training_view(const Graph& g, const Splits& splits);

std::string to_string(SplitMode mode);
SplitMode split_mode_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Canonical dataset directory: meta.json, edges.csv, features.csv, labels.csv.

Graph load_dataset(const std::filesystem::path& dir);
void save_dataset(const Graph& g, const std::filesystem::path& dir);

}  // namespace symbiotic
