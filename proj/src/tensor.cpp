#include "symbiotic/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace symbiotic {

Tensor::Tensor(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) {
        throw std::invalid_argument("Tensor: value count does not match shape");
    }
}

Tensor Tensor::column(std::vector<double> values) {
    const auto n = values.size();
    return Tensor(n, 1, std::move(values));
}

double Tensor::item() const {
    if (data.size() != 1) {
        throw std::logic_error("Tensor::item: tensor is not a scalar");
    }
    return data[0];
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

CsrMatrix CsrMatrix::from_dense(const Tensor& dense) {
    CsrMatrix m;
    m.rows = dense.rows;
    m.cols = dense.cols;
    m.row_ptr.reserve(dense.rows + 1);
    m.row_ptr.push_back(0);
    for (std::size_t r = 0; r < dense.rows; ++r) {
        for (std::size_t c = 0; c < dense.cols; ++c) {
            const double x = dense(r, c);
            if (x != 0.0) {
                m.col.push_back(static_cast<std::uint32_t>(c));
                m.val.push_back(x);
            }
        }
        m.row_ptr.push_back(m.val.size());
    }
    return m;
}

namespace {

void sort_by_destination(SparsePattern& p) {
    std::vector<std::size_t> order(p.dst.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (p.dst[a] != p.dst[b]) return p.dst[a] < p.dst[b];
        return p.src[a] < p.src[b];
    });
    auto permute = [&](std::vector<std::uint32_t>& v) {
        std::vector<std::uint32_t> out(v.size());
        for (std::size_t i = 0; i < order.size(); ++i) out[i] = v[order[i]];
        v = std::move(out);
    };
    permute(p.dst);
    permute(p.src);
    permute(p.slot);
}

SparsePattern expand(std::size_t n, std::span<const std::uint32_t> u, std::span<const std::uint32_t> v,
                     bool self_loops) {
    if (u.size() != v.size()) {
        throw std::invalid_argument("SparsePattern: endpoint lists differ in length");
    }
    SparsePattern p;
    p.num_nodes = n;
    p.num_slots = u.size() + (self_loops ? n : 0);
    const std::size_t entries = 2 * u.size() + (self_loops ? n : 0);
    p.dst.reserve(entries);
    p.src.reserve(entries);
    p.slot.reserve(entries);
    for (std::size_t k = 0; k < u.size(); ++k) {
        if (u[k] >= n || v[k] >= n) {
            throw std::out_of_range("SparsePattern: node index out of range");
        }
        p.dst.push_back(u[k]);
        p.src.push_back(v[k]);
        p.slot.push_back(static_cast<std::uint32_t>(k));
        p.dst.push_back(v[k]);
        p.src.push_back(u[k]);
        p.slot.push_back(static_cast<std::uint32_t>(k));
    }
    if (self_loops) {
        for (std::size_t i = 0; i < n; ++i) {
            p.dst.push_back(static_cast<std::uint32_t>(i));
            p.src.push_back(static_cast<std::uint32_t>(i));
            p.slot.push_back(static_cast<std::uint32_t>(u.size() + i));
        }
    }
    sort_by_destination(p);
    return p;
}

}  // namespace

SparsePattern SparsePattern::undirected_with_self_loops(std::size_t n, std::span<const std::uint32_t> u,
                                                        std::span<const std::uint32_t> v) {
    return expand(n, u, v, true);
}

SparsePattern SparsePattern::undirected(std::size_t n, std::span<const std::uint32_t> u,
                                        std::span<const std::uint32_t> v) {
    return expand(n, u, v, false);
}

SparsePattern SparsePattern::with_entry_slots() const {
    SparsePattern p = *this;
    p.num_slots = dst.size();
    std::iota(p.slot.begin(), p.slot.end(), std::uint32_t{0});
    return p;
}

}  // namespace symbiotic
