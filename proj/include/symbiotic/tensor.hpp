#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace symbiotic {

/// Dense row-major matrix of doubles. Vectors are stored as (n x 1).
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Tensor(std::size_t r, std::size_t c, std::vector<double> values);

    static Tensor column(std::vector<double> values);
    static Tensor scalar(double v) { return Tensor(1, 1, v); }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    double item() const;
    bool all_finite() const;
};

/// Constant sparse matrix in CSR layout (node features).
struct CsrMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<std::uint32_t> col;
    std::vector<double> val;

    static CsrMatrix from_dense(const Tensor& dense);
    std::size_t nnz() const { return val.size(); }
};

/// Directed message-passing pattern: entry e sends src[e] -> dst[e] scaled by
/// the weight stored in slot[e]. Several entries may share one slot, which is
/// how an undirected pair contributes one weight to both directions.
struct SparsePattern {
    std::size_t num_nodes = 0;
    std::size_t num_slots = 0;
    std::vector<std::uint32_t> dst;
    std::vector<std::uint32_t> src;
    std::vector<std::uint32_t> slot;

    std::size_t num_entries() const { return dst.size(); }

    /// Pairs (u[k], v[k]) expanded in both directions using slot k, followed by
    /// one self-loop per node using slot m + i. Entries are ordered by (dst, src).
    static SparsePattern undirected_with_self_loops(std::size_t n, std::span<const std::uint32_t> u,
                                                    std::span<const std::uint32_t> v);
    /// Pairs expanded in both directions, no self-loops, slot k per pair.
    static SparsePattern undirected(std::size_t n, std::span<const std::uint32_t> u,
                                    std::span<const std::uint32_t> v);

    /// Same entries, but every entry owns its slot (slot[e] == e).
    SparsePattern with_entry_slots() const;
};

using PatternPtr = std::shared_ptr<const SparsePattern>;
using CsrPtr = std::shared_ptr<const CsrMatrix>;

}  // namespace symbiotic
