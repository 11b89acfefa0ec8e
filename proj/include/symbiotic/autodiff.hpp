#pragma once

// Tape-based reverse-mode automatic differentiation.
//
// Every primitive records its value together with a backward rule that is
// itself written in terms of taped primitives. Calling Tape::grad therefore
// produces gradients that are again differentiable, which is what lets an
// entire unrolled training loop (forward passes plus their parameter
// gradients) be differentiated once more with respect to edge weights.
// Tape::gradients / Tape::backward run the same rules with recording switched
// off and return plain tensors.

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "symbiotic/tensor.hpp"

namespace symbiotic::ad {

class Tape;

class Var {
public:
    Var() = default;
    Var(Tape* tape, std::int64_t id) : tape_(tape), id_(id) {}

    bool valid() const { return tape_ != nullptr && id_ >= 0; }
    std::int64_t id() const { return id_; }
    Tape& tape() const { return *tape_; }
    const Tensor& value() const;
    std::size_t rows() const { return value().rows; }
    std::size_t cols() const { return value().cols; }

private:
    Tape* tape_ = nullptr;
    std::int64_t id_ = -1;
};

/// Backward rule: given the node itself and the incoming gradient, fill
/// `input_grads[k]` for every input with `needed[k] == true`.
using BackwardFn =
    std::function<void(const Var& self, const Var& grad, const std::vector<bool>& needed, std::vector<Var>& input_grads)>;

/// Gradients keyed by tape node id, as returned by Tape::backward.
class GradientMap {
public:
    bool contains(const Var& v) const { return grads_.count(v.id()) != 0; }
    /// Throws std::out_of_range for tensors that do not influence the output.
    const Tensor& at(const Var& v) const;
    std::size_t size() const { return grads_.size(); }
    bool empty() const { return grads_.empty(); }

private:
    friend class Tape;
    std::unordered_map<std::int64_t, Tensor> grads_;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    /// Leaf that requires gradients.
    Var variable(Tensor value);

    Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

    const Tensor& value(const Var& v) const;
    bool requires_grad(const Var& v) const;
    bool recording() const { return recording_; }

    /// Differentiable gradients of scalar `output` w.r.t. each of `wrt`. Inputs
    /// that do not influence the output receive a constant zero tensor.
    std::vector<Var> grad(const Var& output, std::span<const Var> wrt);

    /// Plain gradients of scalar `output` w.r.t. each of `wrt`; the tape is left
    /// exactly as it was before the call.
    std::vector<Tensor> gradients(const Var& output, std::span<const Var> wrt);

    /// Plain gradients for every leaf variable reachable from `output`.
    GradientMap backward(const Var& output);

    std::size_t size() const { return nodes_.size(); }
    std::size_t value_bytes() const { return bytes_; }

private:
    struct Node {
        Tensor value;
        std::vector<std::int64_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        bool leaf = false;
    };

    Var push(Node node);
    std::vector<Var> run_backward(const Var& output, std::span<const std::int64_t> targets, bool create_graph);
    void release(std::int64_t id);
    void truncate(std::size_t size);

    std::deque<Node> nodes_;
    std::size_t bytes_ = 0;
    bool recording_ = true;
    // Nodes at or beyond this id were created by an in-flight non-recording
    // backward pass and may be freed as soon as they are consumed.
    std::int64_t scratch_begin_ = -1;
};

// ---------------------------------------------------------------------------
// Primitives. All operands must live on the same tape.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// Elementwise product with a constant tensor (masks, dropout).
Var mul_const(const Var& a, const Tensor& c);
/// a * s where s is a (1 x 1) tensor on the tape.
Var scalar_mul(const Var& a, const Var& s);

/// op(a) * op(b) with optional transposes.
Var matmul(const Var& a, const Var& b, bool transpose_a = false, bool transpose_b = false);
/// X * b (or X^T * b) with constant sparse X.
Var csr_matmul(const CsrPtr& x, const Var& b, bool transpose = false);

/// out[dst] += w[slot] * dense[src] (roles of dst/src swapped when transposed).
Var spmm(const PatternPtr& pattern, const Var& weights, const Var& dense, bool transpose = false);
/// result[slot] = sum over entries with that slot of <a[dst], b[src]>.
Var edge_dot(const PatternPtr& pattern, const Var& a, const Var& b, bool transpose = false);

Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var exp(const Var& x);
Var tanh(const Var& x);
Var pow(const Var& x, double p);
/// Training-only dropout with a deterministic mask drawn from `seed`.
Var dropout(const Var& x, double rate, std::uint64_t seed);

Var row_sum(const Var& a);                 // (n x c) -> (n x 1)
Var col_sum(const Var& a);                 // (n x c) -> (1 x c)
Var sum_all(const Var& a);                 // -> (1 x 1)
Var mul_col(const Var& a, const Var& v);   // a[i, :] * v[i]
Var add_row(const Var& a, const Var& b);   // a[i, :] + b[0, :]
Var broadcast_rows(const Var& b, std::size_t n);  // (1 x c) -> (n x c)

Var gather_rows(const Var& a, std::vector<std::uint32_t> index);
Var scatter_add_rows(const Var& a, std::vector<std::uint32_t> index, std::size_t rows);
Var pick(const Var& a, std::vector<std::uint32_t> rows, std::vector<std::uint32_t> cols);  // -> (k x 1)
Var scatter_entries(const Var& v, std::vector<std::uint32_t> rows, std::vector<std::uint32_t> cols,
                    std::size_t n_rows, std::size_t n_cols);

Var slice_cols(const Var& a, std::size_t begin, std::size_t count);
Var embed_cols(const Var& a, std::size_t begin, std::size_t total);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t count);
Var concat_rows(const std::vector<Var>& parts);

Var log_softmax(const Var& logits);
Var row_softmax(const Var& logits);

// ---------------------------------------------------------------------------
// Composites built from the primitives above.

/// Mean negative log-likelihood of `labels[k]` at row `nodes[k]`.
Var masked_cross_entropy(const Var& logits, std::span<const std::uint32_t> nodes, std::span<const int> labels);

/// Softmax of `values` (entries x heads) within segments, where each
/// unnormalized coefficient exp(v) is multiplied by `entry_weights` (entries x 1)
/// before normalization. Every segment needs positive total weight.
Var segment_softmax(const Var& values, std::span<const std::uint32_t> segment, std::size_t num_segments,
                    const Var& entry_weights);

// ---------------------------------------------------------------------------

/// Max over coordinates of |analytic - central difference| /
/// max(1e-12, |analytic| + |numeric|). `f` builds a scalar on the given tape
/// from the given input variable. Throws std::invalid_argument when eps <= 0.
double finite_diff_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x, double eps);

}  // namespace symbiotic::ad
