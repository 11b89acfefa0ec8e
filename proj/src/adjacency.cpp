#include "symbiotic/adjacency.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace symbiotic {

WeightedPairs graph_pairs(ad::Tape& tape, const Graph& g) {
    WeightedPairs p;
    p.num_nodes = g.num_nodes;
    p.keys.reserve(g.num_edges());
    p.u.reserve(g.num_edges());
    p.v.reserve(g.num_edges());
    for (const auto& [i, j] : g.edges) {
        p.keys.push_back(tri_encode(i, j, g.num_nodes));
        p.u.push_back(i);
        p.v.push_back(j);
    }
    p.weights = tape.constant(Tensor(g.num_edges(), 1, 1.0));
    return p;
}

WeightedPairs overlay(const WeightedPairs& base, std::span<const std::uint64_t> block_keys, const ad::Var& block_values) {
    if (block_keys.empty()) return base;
    if (block_values.value().rows != block_keys.size() || block_values.value().cols != 1) {
        throw std::invalid_argument("overlay: need one value per block key");
    }
    std::vector<std::uint64_t> sorted_block(block_keys.begin(), block_keys.end());
    std::sort(sorted_block.begin(), sorted_block.end());
    if (std::adjacent_find(sorted_block.begin(), sorted_block.end()) != sorted_block.end()) {
        throw std::invalid_argument("overlay: duplicate block key");
    }

    WeightedPairs out;
    out.num_nodes = base.num_nodes;
    out.keys.reserve(base.keys.size() + sorted_block.size());
    std::set_union(base.keys.begin(), base.keys.end(), sorted_block.begin(), sorted_block.end(),
                   std::back_inserter(out.keys));
    const std::size_t m = out.keys.size();
    out.u.resize(m);
    out.v.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
        const auto [i, j] = tri_decode(out.keys[k], base.num_nodes);
        out.u[k] = i;
        out.v[k] = j;
    }
    auto position = [&](std::uint64_t key) {
        return static_cast<std::uint32_t>(std::lower_bound(out.keys.begin(), out.keys.end(), key) - out.keys.begin());
    };
    std::vector<std::uint32_t> base_pos(base.keys.size());
    for (std::size_t k = 0; k < base.keys.size(); ++k) base_pos[k] = position(base.keys[k]);
    std::vector<std::uint32_t> block_pos(block_keys.size());
    for (std::size_t k = 0; k < block_keys.size(); ++k) block_pos[k] = position(block_keys[k]);

    using namespace ad;
    const Var base_w = scatter_add_rows(base.weights, std::move(base_pos), m);
    const Var present = gather_rows(base_w, block_pos);
    const Var delta = mul(add_scalar(scale(present, -2.0), 1.0), block_values);
    out.weights = add(base_w, scatter_add_rows(delta, std::move(block_pos), m));
    return out;
}

ad::Var normalize_adjacency(const ad::Var& weights, std::span<const NodeId> u, std::span<const NodeId> v,
                            std::size_t num_nodes) {
    using namespace ad;
    const Tensor& w = weights.value();
    if (w.cols != 1 || w.rows != u.size() || u.size() != v.size()) {
        throw std::invalid_argument("normalize_adjacency: need one weight per pair");
    }
    for (double x : w.data) {
        if (x < 0.0) throw std::invalid_argument("normalize_adjacency: negative edge weight");
    }
    std::vector<std::uint32_t> us(u.begin(), u.end());
    std::vector<std::uint32_t> vs(v.begin(), v.end());
    const Var degree = add_scalar(add(scatter_add_rows(weights, us, num_nodes), scatter_add_rows(weights, vs, num_nodes)), 1.0);
    const Var inv_sqrt = pow(degree, -0.5);
    const Var pair_norm = mul(mul(weights, gather_rows(inv_sqrt, std::move(us))), gather_rows(inv_sqrt, std::move(vs)));
    const Var loops = pow(degree, -1.0);
    return concat_rows({pair_norm, loops});
}

std::vector<double> normalize_adjacency_values(std::span<const double> weights, std::span<const NodeId> u,
                                               std::span<const NodeId> v, std::size_t num_nodes) {
    if (weights.size() != u.size() || u.size() != v.size()) {
        throw std::invalid_argument("normalize_adjacency: need one weight per pair");
    }
    std::vector<double> deg(num_nodes, 1.0);
    for (std::size_t k = 0; k < weights.size(); ++k) {
        if (weights[k] < 0.0) throw std::invalid_argument("normalize_adjacency: negative edge weight");
        deg[u[k]] += weights[k];
        deg[v[k]] += weights[k];
    }
    std::vector<double> out(weights.size() + num_nodes);
    for (std::size_t k = 0; k < weights.size(); ++k) out[k] = weights[k] / std::sqrt(deg[u[k]] * deg[v[k]]);
    for (std::size_t i = 0; i < num_nodes; ++i) out[weights.size() + i] = 1.0 / deg[i];
    return out;
}

Adjacency build_adjacency(const WeightedPairs& pairs) {
    Adjacency a;
    a.num_nodes = pairs.num_nodes;
    a.pattern = std::make_shared<const SparsePattern>(
        SparsePattern::undirected_with_self_loops(pairs.num_nodes, pairs.u, pairs.v));
    a.normalized = normalize_adjacency(pairs.weights, pairs.u, pairs.v, pairs.num_nodes);
    ad::Tape& t = pairs.weights.tape();
    a.raw = ad::concat_rows({pairs.weights, t.constant(Tensor(pairs.num_nodes, 1, 1.0))});
    return a;
}

}  // namespace symbiotic
