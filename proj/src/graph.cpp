#include "symbiotic/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "symbiotic/random.hpp"

namespace symbiotic {

bool Graph::has_edge(NodeId i, NodeId j) const {
    if (i > j) std::swap(i, j);
    return std::binary_search(edges.begin(), edges.end(), NodePair{i, j});
}

std::uint64_t Graph::id() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    mix(num_nodes);
    for (const auto& [i, j] : edges) {
        mix(i);
        mix(j);
    }
    return h;
}

void Graph::validate() const {
    for (std::size_t k = 0; k < edges.size(); ++k) {
        const auto [i, j] = edges[k];
        if (!(i < j) || j >= num_nodes) throw std::invalid_argument("Graph: edge violates 0 <= i < j < n");
        if (k > 0 && !(edges[k - 1] < edges[k])) throw std::invalid_argument("Graph: edges not sorted or duplicated");
    }
    if (features.rows != num_nodes) throw std::invalid_argument("Graph: feature rows differ from node count");
    if (labels.size() != num_nodes) throw std::invalid_argument("Graph: label count differs from node count");
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= num_classes) throw std::invalid_argument("Graph: label out of range");
    }
}

Graph make_graph(std::size_t num_nodes, std::size_t num_classes, const std::vector<NodePair>& pairs, Tensor features,
                 std::vector<int> labels, std::string name) {
    Graph g;
    g.name = std::move(name);
    g.num_nodes = num_nodes;
    g.num_classes = num_classes;
    g.features = std::move(features);
    g.labels = std::move(labels);
    g.edges.reserve(pairs.size());
    for (auto [i, j] : pairs) {
        if (i >= num_nodes || j >= num_nodes) throw std::out_of_range("make_graph: node index out of range");
        if (i == j) continue;
        if (i > j) std::swap(i, j);
        g.edges.emplace_back(i, j);
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
    g.validate();
    return g;
}

// ---------------------------------------------------------------------------

std::uint64_t num_pairs(std::size_t n) {
    const auto m = static_cast<std::uint64_t>(n);
    return m < 2 ? 0 : m * (m - 1) / 2;
}

namespace {

std::uint64_t row_start(std::uint64_t i, std::uint64_t n) { return i * n - i * (i + 1) / 2; }

}  // namespace

std::uint64_t tri_encode(NodeId i, NodeId j, std::size_t n) {
    if (!(i < j) || j >= n) throw std::out_of_range("tri_encode: need 0 <= i < j < n");
    return row_start(i, n) + (j - i - 1);
}

NodePair tri_decode(std::uint64_t k, std::size_t n) {
    const std::uint64_t total = num_pairs(n);
    if (k >= total) throw std::out_of_range("tri_decode: index out of range");
    const auto nn = static_cast<double>(n);
    // Closed-form row estimate, then exact correction.
    const double disc = std::sqrt(std::max(0.0, (2.0 * nn - 1.0) * (2.0 * nn - 1.0) - 8.0 * static_cast<double>(k)));
    auto i = static_cast<std::uint64_t>(std::max(0.0, std::floor((2.0 * nn - 1.0 - disc) / 2.0)));
    if (i > n - 2) i = n - 2;
    while (i > 0 && row_start(i, n) > k) --i;
    while (i + 1 <= n - 2 && row_start(i + 1, n) <= k) ++i;
    const std::uint64_t j = k - row_start(i, n) + i + 1;
    return {static_cast<NodeId>(i), static_cast<NodeId>(j)};
}

// ---------------------------------------------------------------------------

Graph apply_flips(const Graph& g, const EdgeFlipSet& flips) {
    std::vector<NodePair> toggles;
    toggles.reserve(flips.size());
    for (auto [i, j] : flips.flips) {
        if (i > j) std::swap(i, j);
        if (i == j || j >= g.num_nodes) throw std::invalid_argument("apply_flips: invalid pair");
        toggles.emplace_back(i, j);
    }
    std::sort(toggles.begin(), toggles.end());
    if (std::adjacent_find(toggles.begin(), toggles.end()) != toggles.end()) {
        throw std::invalid_argument("apply_flips: duplicate pair in flip set");
    }
    Graph out = g;
    out.edges.clear();
    out.edges.reserve(g.edges.size() + toggles.size());
    // Symmetric difference of two sorted sets.
    std::set_symmetric_difference(g.edges.begin(), g.edges.end(), toggles.begin(), toggles.end(),
                                  std::back_inserter(out.edges));
    return out;
}

double jaccard_similarity(const Graph& g, NodeId i, NodeId j) {
    const auto a = g.features.row(i);
    const auto b = g.features.row(j);
    std::size_t inter = 0, uni = 0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        const bool x = a[c] != 0.0, y = b[c] != 0.0;
        inter += (x && y) ? 1 : 0;
        uni += (x || y) ? 1 : 0;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Graph jaccard_purify(const Graph& g, double tau) {
    if (tau < 0.0) throw std::invalid_argument("jaccard_purify: tau must be >= 0");
    for (double x : g.features.data) {
        if (x != 0.0 && x != 1.0) throw std::invalid_argument("jaccard_purify: features must be binary");
    }
    Graph out = g;
    out.edges.clear();
    for (const auto& [i, j] : g.edges) {
        if (jaccard_similarity(g, i, j) > tau) out.edges.emplace_back(i, j);
    }
    return out;
}

std::size_t budget_from_fraction(const Graph& g, double fraction) {
    if (!(fraction >= 0.0)) throw std::invalid_argument("budget_from_fraction: fraction must be >= 0");
    // Tolerance keeps products such as 0.29 * 100 from rounding down a step.
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(g.num_edges()) + 1e-9));
}

// ---------------------------------------------------------------------------

std::vector<NodeId> Splits::non_test_unlabeled() const {
    std::vector<NodeId> out = unlabeled_train;
    out.insert(out.end(), validation.begin(), validation.end());
    std::sort(out.begin(), out.end());
    return out;
}

Splits make_splits(const Graph& g, std::size_t labeled_per_class, double test_fraction, SplitMode mode,
                   std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("make_splits: test_fraction must lie in (0, 1)");
    std::vector<NodeId> order(g.num_nodes);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<NodeId>(i);
    Rng rng(seed);
    rng.shuffle(order);

    Splits s;
    s.mode = mode;
    std::vector<std::size_t> taken(g.num_classes, 0);
    std::vector<NodeId> rest;
    rest.reserve(order.size());
    for (NodeId v : order) {
        const auto c = static_cast<std::size_t>(g.labels[v]);
        if (taken[c] < labeled_per_class) {
            ++taken[c];
            s.labeled_train.push_back(v);
        } else {
            rest.push_back(v);
        }
    }
    for (std::size_t c = 0; c < g.num_classes; ++c) {
        if (taken[c] < labeled_per_class) {
            throw std::invalid_argument("make_splits: class " + std::to_string(c) + " has fewer than " +
                                        std::to_string(labeled_per_class) + " nodes");
        }
    }
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(g.num_nodes)));
    if (n_test > rest.size()) throw std::invalid_argument("make_splits: not enough nodes for the test set");
    s.test.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_test));
    const std::size_t remaining = rest.size() - n_test;
    const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(remaining)));
    auto it = rest.begin() + static_cast<std::ptrdiff_t>(n_test);
    s.validation.assign(it, it + static_cast<std::ptrdiff_t>(n_val));
    s.unlabeled_train.assign(it + static_cast<std::ptrdiff_t>(n_val), rest.end());
    for (auto* v : {&s.labeled_train, &s.unlabeled_train, &s.validation, &s.test}) std::sort(v->begin(), v->end());
    return s;
}

Graph training_view(const Graph& g, const Splits& splits) {
    if (splits.mode == SplitMode::transductive) return g;
    std::vector<char> is_test(g.num_nodes, 0);
    for (NodeId v : splits.test) is_test[v] = 1;
    Graph out = g;
    out.edges.clear();
    for (const auto& e : g.edges) {
        if (!is_test[e.first] && !is_test[e.second]) out.edges.push_back(e);
    }
    return out;
}

std::string to_string(SplitMode mode) { return mode == SplitMode::transductive ? "transductive" : "inductive"; }

SplitMode split_mode_from_string(const std::string& s) {
    if (s == "transductive") return SplitMode::transductive;
    if (s == "inductive") return SplitMode::inductive;
    throw std::invalid_argument("unknown split mode: " + s);
}

}  // namespace symbiotic
