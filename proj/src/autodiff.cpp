#include "symbiotic/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "symbiotic/random.hpp"

namespace symbiotic::ad {

namespace {

using Index = std::vector<std::uint32_t>;
using IndexPtr = std::shared_ptr<const Index>;
using TensorPtr = std::shared_ptr<const Tensor>;

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

Tape& common_tape(const Var& a, const Var& b) {
    require(a.valid() && b.valid(), "autodiff: invalid operand");
    require(&a.tape() == &b.tape(), "autodiff: operands live on different tapes");
    return a.tape();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.value().same_shape(b.value())) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.rows, t.cols); }

Var mul_const_shared(const Var& a, TensorPtr c) {
    require(a.valid(), "mul_const: invalid operand");
    const Tensor& x = a.value();
    require(x.same_shape(*c), "mul_const: shape mismatch");
    Tensor out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] * c->data[i];
    return a.tape().record(std::move(out), {a},
                           [c](const Var&, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
                               gi[0] = mul_const_shared(g, c);
                           });
}

Var gather_rows_shared(const Var& a, IndexPtr idx);
Var scatter_add_rows_shared(const Var& a, IndexPtr idx, std::size_t rows);
Var pick_shared(const Var& a, IndexPtr rows, IndexPtr cols);
Var scatter_entries_shared(const Var& v, IndexPtr rows, IndexPtr cols, std::size_t nr, std::size_t nc);

Var gather_rows_shared(const Var& a, IndexPtr idx) {
    const Tensor& x = a.value();
    Tensor out(idx->size(), x.cols);
    for (std::size_t k = 0; k < idx->size(); ++k) {
        const auto r = (*idx)[k];
        if (r >= x.rows) throw std::out_of_range("gather_rows: index out of range");
        std::copy_n(x.data.data() + r * x.cols, x.cols, out.data.data() + k * x.cols);
    }
    const std::size_t n = x.rows;
    return a.tape().record(std::move(out), {a},
                           [idx, n](const Var&, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
                               gi[0] = scatter_add_rows_shared(g, idx, n);
                           });
}

Var scatter_add_rows_shared(const Var& a, IndexPtr idx, std::size_t rows) {
    const Tensor& x = a.value();
    require(x.rows == idx->size(), "scatter_add_rows: index length must equal row count");
    Tensor out(rows, x.cols);
    for (std::size_t k = 0; k < idx->size(); ++k) {
        const auto r = (*idx)[k];
        if (r >= rows) throw std::out_of_range("scatter_add_rows: index out of range");
        double* dst = out.data.data() + r * x.cols;
        const double* src = x.data.data() + k * x.cols;
        for (std::size_t c = 0; c < x.cols; ++c) dst[c] += src[c];
    }
    return a.tape().record(std::move(out), {a},
                           [idx](const Var&, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
                               gi[0] = gather_rows_shared(g, idx);
                           });
}

Var pick_shared(const Var& a, IndexPtr rows, IndexPtr cols) {
    const Tensor& x = a.value();
    require(rows->size() == cols->size(), "pick: index lists differ in length");
    Tensor out(rows->size(), 1);
    for (std::size_t k = 0; k < rows->size(); ++k) {
        const auto r = (*rows)[k];
        const auto c = (*cols)[k];
        if (r >= x.rows || c >= x.cols) throw std::out_of_range("pick: index out of range");
        out.data[k] = x(r, c);
    }
    const std::size_t nr = x.rows, nc = x.cols;
    return a.tape().record(std::move(out), {a},
                           [rows, cols, nr, nc](const Var&, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
                               gi[0] = scatter_entries_shared(g, rows, cols, nr, nc);
                           });
}

Var scatter_entries_shared(const Var& v, IndexPtr rows, IndexPtr cols, std::size_t nr, std::size_t nc) {
    const Tensor& x = v.value();
    require(x.cols == 1 && x.rows == rows->size() && rows->size() == cols->size(),
            "scatter_entries: expects a column with one value per index");
    Tensor out(nr, nc);
    for (std::size_t k = 0; k < rows->size(); ++k) {
        const auto r = (*rows)[k];
        const auto c = (*cols)[k];
        if (r >= nr || c >= nc) throw std::out_of_range("scatter_entries: index out of range");
        out(r, c) += x.data[k];
    }
    return v.tape().record(std::move(out), {v},
                           [rows, cols](const Var&, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
                               gi[0] = pick_shared(g, rows, cols);
                           });
}

// Writes op(a) * op(b) into a fresh tensor.
Tensor matmul_kernel(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    const std::size_t m = ta ? a.cols : a.rows;
    const std::size_t k = ta ? a.rows : a.cols;
    const std::size_t kb = tb ? b.cols : b.rows;
    const std::size_t p = tb ? b.rows : b.cols;
    if (k != kb) throw std::invalid_argument("matmul: inner dimensions differ");
    Tensor out(m, p);
    // Materialize b as (k x p) row-major so the inner loop is contiguous.
    Tensor bt;
    const Tensor* bk = &b;
    if (tb) {
        bt = Tensor(k, p);
        for (std::size_t i = 0; i < b.rows; ++i)
            for (std::size_t j = 0; j < b.cols; ++j) bt(j, i) = b(i, j);
        bk = &bt;
    }
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = out.data.data() + i * p;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = ta ? a(l, i) : a(i, l);
            if (av == 0.0) continue;
            const double* brow = bk->data.data() + l * p;
            for (std::size_t j = 0; j < p; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

const Tensor& Var::value() const {
    if (!valid()) throw std::logic_error("Var: not attached to a tape");
    return tape_->value(*this);
}

const Tensor& GradientMap::at(const Var& v) const {
    auto it = grads_.find(v.id());
    if (it == grads_.end()) {
        throw std::out_of_range("GradientMap: tensor does not influence the differentiated output");
    }
    return it->second;
}

Var Tape::push(Node node) {
    bytes_ += node.value.data.size() * sizeof(double);
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<std::int64_t>(nodes_.size()) - 1);
}

Var Tape::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::variable(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    n.leaf = true;
    return push(std::move(n));
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
#ifndef NDEBUG
    if (!value.all_finite()) throw std::domain_error("autodiff: non-finite value produced");
#endif
    Node n;
    n.value = std::move(value);
    bool needs = false;
    if (recording_) {
        for (const auto& in : inputs) {
            if (&in.tape() != this) throw std::invalid_argument("autodiff: operand from another tape");
            needs = needs || nodes_[static_cast<std::size_t>(in.id())].requires_grad;
        }
    }
    if (needs) {
        n.requires_grad = true;
        n.inputs.reserve(inputs.size());
        for (const auto& in : inputs) n.inputs.push_back(in.id());
        n.backward = std::move(backward);
    }
    return push(std::move(n));
}

const Tensor& Tape::value(const Var& v) const {
    if (v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size()) {
        throw std::out_of_range("Tape: unknown tensor id");
    }
    return nodes_[static_cast<std::size_t>(v.id())].value;
}

bool Tape::requires_grad(const Var& v) const {
    return nodes_.at(static_cast<std::size_t>(v.id())).requires_grad;
}

void Tape::release(std::int64_t id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    bytes_ -= node.value.data.size() * sizeof(double);
    node.value.data = std::vector<double>();
    node.backward = nullptr;
}

void Tape::truncate(std::size_t size) {
    while (nodes_.size() > size) {
        bytes_ -= nodes_.back().value.data.size() * sizeof(double);
        nodes_.pop_back();
    }
}

std::vector<Var> Tape::run_backward(const Var& output, std::span<const std::int64_t> targets, bool create_graph) {
    if (!output.valid() || &output.tape() != this) throw std::invalid_argument("backward: output not on this tape");
    const Tensor& out_value = value(output);
    if (out_value.rows != 1 || out_value.cols != 1) throw std::invalid_argument("backward: output is not a scalar");

    const auto o = static_cast<std::size_t>(output.id());
    std::vector<Var> result(targets.size());
    if (!nodes_[o].requires_grad) return result;

    std::vector<char> is_target(o + 1, 0);
    for (auto t : targets) {
        if (t >= 0 && static_cast<std::size_t>(t) <= o) is_target[static_cast<std::size_t>(t)] = 1;
    }
    std::vector<char> relevant(o + 1, 0);
    for (std::size_t i = 0; i <= o; ++i) {
        const Node& n = nodes_[i];
        if (!n.requires_grad) continue;
        if (is_target[i]) {
            relevant[i] = 1;
            continue;
        }
        for (auto in : n.inputs) {
            if (relevant[static_cast<std::size_t>(in)]) {
                relevant[i] = 1;
                break;
            }
        }
    }
    if (!relevant[o]) return result;

    const bool scratch = !create_graph;
    // Reference counts for scratch gradient nodes held in `acc`.
    std::unordered_map<std::int64_t, int> refs;
    auto hold = [&](const Var& v) {
        if (scratch && v.id() >= scratch_begin_) ++refs[v.id()];
    };
    auto drop = [&](const Var& v) {
        if (!scratch || v.id() < scratch_begin_) return;
        auto it = refs.find(v.id());
        if (it == refs.end()) return;
        if (--it->second == 0) {
            refs.erase(it);
            release(v.id());
        }
    };

    std::vector<Var> acc(o + 1);
    acc[o] = constant(Tensor::scalar(1.0));
    hold(acc[o]);

    for (std::size_t step = 0; step <= o; ++step) {
        const std::size_t i = o - step;
        if (!relevant[i] || !acc[i].valid()) continue;
        Node& node = nodes_[i];
        if (node.backward) {
            std::vector<bool> needed(node.inputs.size());
            bool any = false;
            for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                needed[k] = relevant[static_cast<std::size_t>(node.inputs[k])] != 0;
                any = any || needed[k];
            }
            if (any) {
                std::vector<Var> input_grads(node.inputs.size());
                const std::size_t before = nodes_.size();
                const BackwardFn& fn = node.backward;
                fn(Var(this, static_cast<std::int64_t>(i)), acc[i], needed, input_grads);
                if (scratch) {
                    for (std::size_t id = before; id < nodes_.size(); ++id) {
                        const bool kept = std::any_of(input_grads.begin(), input_grads.end(), [&](const Var& g) {
                            return g.valid() && static_cast<std::size_t>(g.id()) == id;
                        });
                        if (!kept) release(static_cast<std::int64_t>(id));
                    }
                }
                for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                    if (!needed[k] || !input_grads[k].valid()) continue;
                    const auto in = static_cast<std::size_t>(node.inputs[k]);
                    if (!acc[in].valid()) {
                        acc[in] = input_grads[k];
                        hold(acc[in]);
                    } else {
                        Var sum = add(acc[in], input_grads[k]);
                        hold(sum);
                        drop(acc[in]);
                        acc[in] = sum;
                    }
                }
                // Contributions that were summed into an existing gradient are
                // no longer referenced unless they alias a held node.
                if (scratch) {
                    for (const auto& g : input_grads) {
                        if (g.valid() && g.id() >= scratch_begin_ && !refs.count(g.id())) release(g.id());
                    }
                }
            }
        }
        if (!is_target[i]) {
            drop(acc[i]);
            acc[i] = Var();
        }
    }

    for (std::size_t t = 0; t < targets.size(); ++t) {
        const auto id = targets[t];
        if (id >= 0 && static_cast<std::size_t>(id) <= o && acc[static_cast<std::size_t>(id)].valid()) {
            result[t] = acc[static_cast<std::size_t>(id)];
        }
    }
    return result;
}

namespace {

struct RecordingOff {
    bool& flag;
    bool saved;
    explicit RecordingOff(bool& f) : flag(f), saved(f) { flag = false; }
    ~RecordingOff() { flag = saved; }
};

}  // namespace

std::vector<Var> Tape::grad(const Var& output, std::span<const Var> wrt) {
    std::vector<std::int64_t> ids;
    ids.reserve(wrt.size());
    for (const auto& w : wrt) {
        if (!w.valid() || &w.tape() != this) throw std::invalid_argument("grad: target not on this tape");
        ids.push_back(w.id());
    }
    auto grads = run_backward(output, ids, true);
    for (std::size_t k = 0; k < grads.size(); ++k) {
        if (!grads[k].valid()) grads[k] = constant(zeros_like(value(wrt[k])));
    }
    return grads;
}

std::vector<Tensor> Tape::gradients(const Var& output, std::span<const Var> wrt) {
    std::vector<std::int64_t> ids;
    ids.reserve(wrt.size());
    for (const auto& w : wrt) {
        if (!w.valid() || &w.tape() != this) throw std::invalid_argument("gradients: target not on this tape");
        ids.push_back(w.id());
    }
    const std::size_t start = nodes_.size();
    std::vector<Tensor> out;
    {
        RecordingOff guard(recording_);
        const auto saved_scratch = scratch_begin_;
        scratch_begin_ = static_cast<std::int64_t>(start);
        try {
            auto grads = run_backward(output, ids, false);
            out.reserve(grads.size());
            for (std::size_t k = 0; k < grads.size(); ++k) {
                out.push_back(grads[k].valid() ? value(grads[k]) : zeros_like(value(wrt[k])));
            }
        } catch (...) {
            scratch_begin_ = saved_scratch;
            truncate(start);
            throw;
        }
        scratch_begin_ = saved_scratch;
    }
    truncate(start);
    return out;
}

GradientMap Tape::backward(const Var& output) {
    if (!output.valid() || &output.tape() != this) throw std::invalid_argument("backward: output not on this tape");
    std::vector<Var> leaves;
    const auto o = static_cast<std::size_t>(output.id());
    for (std::size_t i = 0; i <= o && i < nodes_.size(); ++i) {
        if (nodes_[i].leaf) leaves.emplace_back(this, static_cast<std::int64_t>(i));
    }
    GradientMap map;
    if (value(output).size() != 1) throw std::invalid_argument("backward: output is not a scalar");
    if (!nodes_[o].requires_grad) return map;

    std::vector<std::int64_t> ids;
    for (const auto& l : leaves) ids.push_back(l.id());
    const std::size_t start = nodes_.size();
    {
        RecordingOff guard(recording_);
        const auto saved_scratch = scratch_begin_;
        scratch_begin_ = static_cast<std::int64_t>(start);
        try {
            auto grads = run_backward(output, ids, false);
            for (std::size_t k = 0; k < grads.size(); ++k) {
                if (grads[k].valid()) map.grads_.emplace(ids[k], value(grads[k]));
            }
        } catch (...) {
            scratch_begin_ = saved_scratch;
            truncate(start);
            throw;
        }
        scratch_begin_ = saved_scratch;
    }
    truncate(start);
    return map;
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(const Var& a, const Var& b) {
    Tape& t = common_tape(a, b);
    require_same_shape(a, b, "add");
    Tensor out = a.value();
    const Tensor& y = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += y.data[i];
    return t.record(std::move(out), {a, b}, [](const Var&, const Var& g, const std::vector<bool>& need, std::vector<Var>& gi) {
        if (need[0]) gi[0] = g;
        if (need[1]) gi[1] = g;
    });
}

Var sub(const Var& a, const Var& b) {
    Tape& t = common_tape(a, b);
    require_same_shape(a, b, "sub");
    Tensor out = a.value();
    const Tensor& y = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= y.data[i];
    return t.record(std::move(out), {a, b}, [](const Var&, const Var& g, const std::vector<bool>& need, std::vector<Var>& gi) {
        if (need[0]) gi[0] = g;
        if (need[1]) gi[1] = scale(g, -1.0);
    });
}

Var mul(const Var& a, const Var& b) {
    Tape& t = common_tape(a, b);
    require_same_shape(a, b, "mul");
    Tensor out = a.value();
    const Tensor& y = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= y.data[i];
    return t.record(std::move(out), {a, b}, [a, b](const Var&, const Var& g, const std::vector<bool>& need, std::vector<Var>& gi) {
        if (need[0]) gi[0] = mul(g, b);
        if (need[1]) gi[1] = mul(g, a);
    });
}

Var scale(const Var& a, double s) {
    require(a.valid(), "scale: invalid operand");
    Tensor out = a.value();
    for (auto& x : out.data) x *= s;
    return a.tape().record(std::move(out), {a}, [s](const Var&, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
        gi[0] = scale(g, s);
    });
}

Var add_scalar(const Var& a, double s) {
    require(a.valid(), "add_scalar: invalid operand");
    Tensor out = a.value();
    for (auto& x : out.data) x += s;
    return a.tape().record(std::move(out), {a}, [](const Var&, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
        gi[0] = g;
    });
}

Var mul_const(const Var& a, const Tensor& c) { return mul_const_shared(a, std::make_shared<const Tensor>(c)); }

Var scalar_mul(const Var& a, const Var& s) {
    Tape& t = common_tape(a, s);
    require(s.value().size() == 1, "scalar_mul: scale must be 1x1");
    const double v = s.value().data[0];
    Tensor out = a.value();
    for (auto& x : out.data) x *= v;
    return t.record(std::move(out), {a, s}, [a, s](const Var&, const Var& g, const std::vector<bool>& need, std::vector<Var>& gi) {
        if (need[0]) gi[0] = scalar_mul(g, s);
        if (need[1]) gi[1] = sum_all(mul(g, a));
    });
}

// ---------------------------------------------------------------------------
// Products

Var matmul(const Var& a, const Var& b, bool ta, bool tb) {
    Tape& t = common_tape(a, b);
    Tensor out = matmul_kernel(a.value(), b.value(), ta, tb);
    return t.record(std::move(out), {a, b},
                    [a, b, ta, tb](const Var&, const Var& g, const std::vector<bool>& need, std::vector<Var>& gi) {
                        if (!ta && !tb) {
                            if (need[0]) gi[0] = matmul(g, b, false, true);
                            if (need[1]) gi[1] = matmul(a, g, true, false);
                        } else if (!ta && tb) {
                            if (need[0]) gi[0] = matmul(g, b, false, false);
                            if (need[1]) gi[1] = matmul(g, a, true, false);
                        } else if (ta && !tb) {
                            if (need[0]) gi[0] = matmul(b, g, false, true);
                            if (need[1]) gi[1] = matmul(a, g, false, false);
                        } else {
                            if (need[0]) gi[0] = matmul(b, g, true, true);
                            if (need[1]) gi[1] = matmul(g, a, true, true);
                        }
                    });
}

Var csr_matmul(const CsrPtr& x, const Var& b, bool transpose) {
    require(x != nullptr && b.valid(), "csr_matmul: invalid operand");
    const Tensor& d = b.value();
    const std::size_t inner = transpose ? x->rows : x->cols;
    if (d.rows != inner) throw std::invalid_argument("csr_matmul: inner dimensions differ");
    Tensor out(transpose ? x->cols : x->rows, d.cols);
    const std::size_t c = d.cols;
    for (std::size_t r = 0; r < x->rows; ++r) {
        for (std::size_t p = x->row_ptr[r]; p < x->row_ptr[r + 1]; ++p) {
            const double v = x->val[p];
            const std::size_t col = x->col[p];
            const double* src = d.data.data() + (transpose ? r : col) * c;
            double* dst = out.data.data() + (transpose ? col : r) * c;
            for (std::size_t j = 0; j < c; ++j) dst[j] += v * src[j];
        }
    }
    return b.tape().record(std::move(out), {b}, [x, transpose](const Var&, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
        gi[0] = csr_matmul(x, g, !transpose);
    });
}

Var spmm(const PatternPtr& pattern, const Var& weights, const Var& dense, bool transpose) {
    Tape& t = common_tape(weights, dense);
    const SparsePattern& p = *pattern;
    const Tensor& w = weights.value();
    const Tensor& d = dense.value();
    if (w.cols != 1 || w.rows != p.num_slots) throw std::invalid_argument("spmm: need one weight per slot");
    if (d.rows != p.num_nodes) throw std::invalid_argument("spmm: dense row count must equal node count");
    Tensor out(p.num_nodes, d.cols);
    const std::size_t c = d.cols;
    for (std::size_t e = 0; e < p.num_entries(); ++e) {
        const double we = w.data[p.slot[e]];
        if (we == 0.0) continue;
        const std::size_t to = transpose ? p.src[e] : p.dst[e];
        const std::size_t from = transpose ? p.dst[e] : p.src[e];
        double* orow = out.data.data() + to * c;
        const double* irow = d.data.data() + from * c;
        for (std::size_t j = 0; j < c; ++j) orow[j] += we * irow[j];
    }
    return t.record(std::move(out), {weights, dense},
                    [pattern, weights, dense, transpose](const Var&, const Var& g, const std::vector<bool>& need,
                                                         std::vector<Var>& gi) {
                        if (need[0]) gi[0] = edge_dot(pattern, g, dense, transpose);
                        if (need[1]) gi[1] = spmm(pattern, weights, g, !transpose);
                    });
}

Var edge_dot(const PatternPtr& pattern, const Var& a, const Var& b, bool transpose) {
    Tape& t = common_tape(a, b);
    const SparsePattern& p = *pattern;
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.rows != p.num_nodes || y.rows != p.num_nodes || x.cols != y.cols) {
        throw std::invalid_argument("edge_dot: operands must be (num_nodes x c)");
    }
    Tensor out(p.num_slots, 1);
    const std::size_t c = x.cols;
    for (std::size_t e = 0; e < p.num_entries(); ++e) {
        const std::size_t ra = transpose ? p.src[e] : p.dst[e];
        const std::size_t rb = transpose ? p.dst[e] : p.src[e];
        const double* xa = x.data.data() + ra * c;
        const double* yb = y.data.data() + rb * c;
        // Four partial sums so the loop vectorizes without reassociation flags.
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
        std::size_t j = 0;
        for (; j + 4 <= c; j += 4) {
            s0 += xa[j] * yb[j];
            s1 += xa[j + 1] * yb[j + 1];
            s2 += xa[j + 2] * yb[j + 2];
            s3 += xa[j + 3] * yb[j + 3];
        }
        for (; j < c; ++j) s0 += xa[j] * yb[j];
        out.data[p.slot[e]] += (s0 + s1) + (s2 + s3);
    }
    return t.record(std::move(out), {a, b},
                    [pattern, a, b, transpose](const Var&, const Var& g, const std::vector<bool>& need, std::vector<Var>& gi) {
                        if (need[0]) gi[0] = spmm(pattern, g, b, transpose);
                        if (need[1]) gi[1] = spmm(pattern, g, a, !transpose);
                    });
}

// ---------------------------------------------------------------------------
// Nonlinearities

namespace {

Var masked_linear(const Var& x, double negative_slope) {
    require(x.valid(), "relu: invalid operand");
    const Tensor& v = x.value();
    auto mask = std::make_shared<Tensor>(v.rows, v.cols);
    Tensor out(v.rows, v.cols);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double m = v.data[i] > 0.0 ? 1.0 : negative_slope;
        mask->data[i] = m;
        out.data[i] = v.data[i] * m;
    }
    TensorPtr cm = std::move(mask);
    return x.tape().record(std::move(out), {x}, [cm](const Var&, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
        gi[0] = mul_const_shared(g, cm);
    });
}

}  // namespace

Var relu(const Var& x) { return masked_linear(x, 0.0); }

Var leaky_relu(const Var& x, double slope) { return masked_linear(x, slope); }

Var exp(const Var& x) {
    require(x.valid(), "exp: invalid operand");
    Tensor out = x.value();
    for (auto& v : out.data) v = std::exp(v);
    return x.tape().record(std::move(out), {x}, [](const Var& self, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
        gi[0] = mul(g, self);
    });
}

Var tanh(const Var& x) {
    require(x.valid(), "tanh: invalid operand");
    Tensor out = x.value();
    for (auto& v : out.data) v = std::tanh(v);
    return x.tape().record(std::move(out), {x}, [](const Var& self, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
        gi[0] = mul(g, add_scalar(scale(mul(self, self), -1.0), 1.0));
    });
}

Var pow(const Var& x, double p) {
    require(x.valid(), "pow: invalid operand");
    Tensor out = x.value();
    for (auto& v : out.data) v = std::pow(v, p);
    return x.tape().record(std::move(out), {x}, [x, p](const Var&, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
        gi[0] = mul(g, scale(pow(x, p - 1.0), p));
    });
}

Var dropout(const Var& x, double rate, std::uint64_t seed) {
    require(x.valid(), "dropout: invalid operand");
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
    const Tensor& v = x.value();
    Tensor mask(v.rows, v.cols);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < v.size(); ++i) {
        mask.data[i] = unit_hash(seed, i) >= rate ? keep_scale : 0.0;
    }
    return mul_const_shared(x, std::make_shared<const Tensor>(std::move(mask)));
}

// ---------------------------------------------------------------------------
// Reductions and broadcasts

Var row_sum(const Var& a) {
    require(a.valid(), "row_sum: invalid operand");
    const Tensor& x = a.value();
    Tensor out(x.rows, 1);
    for (std::size_t r = 0; r < x.rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols; ++c) s += x(r, c);
        out.data[r] = s;
    }
    const std::size_t rows = x.rows, cols = x.cols;
    return a.tape().record(std::move(out), {a}, [rows, cols](const Var&, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
        gi[0] = mul_col(g.tape().constant(Tensor(rows, cols, 1.0)), g);
    });
}

Var col_sum(const Var& a) {
    require(a.valid(), "col_sum: invalid operand");
    const Tensor& x = a.value();
    Tensor out(1, x.cols);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < x.cols; ++c) out.data[c] += x(r, c);
    const std::size_t rows = x.rows;
    return a.tape().record(std::move(out), {a}, [rows](const Var&, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
        gi[0] = broadcast_rows(g, rows);
    });
}

Var sum_all(const Var& a) {
    require(a.valid(), "sum_all: invalid operand");
    const Tensor& x = a.value();
    double s = 0.0;
    for (double v : x.data) s += v;
    const std::size_t rows = x.rows, cols = x.cols;
    return a.tape().record(Tensor::scalar(s), {a}, [rows, cols](const Var&, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
        gi[0] = scalar_mul(g.tape().constant(Tensor(rows, cols, 1.0)), g);
    });
}

Var mul_col(const Var& a, const Var& v) {
    Tape& t = common_tape(a, v);
    const Tensor& x = a.value();
    const Tensor& s = v.value();
    if (s.cols != 1 || s.rows != x.rows) throw std::invalid_argument("mul_col: need one scale per row");
    Tensor out = x;
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < x.cols; ++c) out(r, c) *= s.data[r];
    return t.record(std::move(out), {a, v}, [a, v](const Var&, const Var& g, const std::vector<bool>& need, std::vector<Var>& gi) {
        if (need[0]) gi[0] = mul_col(g, v);
        if (need[1]) gi[1] = row_sum(mul(g, a));
    });
}

Var add_row(const Var& a, const Var& b) {
    Tape& t = common_tape(a, b);
    const Tensor& x = a.value();
    const Tensor& r = b.value();
    if (r.rows != 1 || r.cols != x.cols) throw std::invalid_argument("add_row: need a (1 x cols) row");
    Tensor out = x;
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t c = 0; c < x.cols; ++c) out(i, c) += r.data[c];
    return t.record(std::move(out), {a, b}, [](const Var&, const Var& g, const std::vector<bool>& need, std::vector<Var>& gi) {
        if (need[0]) gi[0] = g;
        if (need[1]) gi[1] = col_sum(g);
    });
}

Var broadcast_rows(const Var& b, std::size_t n) {
    require(b.valid(), "broadcast_rows: invalid operand");
    const Tensor& r = b.value();
    if (r.rows != 1) throw std::invalid_argument("broadcast_rows: need a single row");
    Tensor out(n, r.cols);
    for (std::size_t i = 0; i < n; ++i) std::copy(r.data.begin(), r.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * r.cols));
    return b.tape().record(std::move(out), {b}, [](const Var&, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
        gi[0] = col_sum(g);
    });
}

// ---------------------------------------------------------------------------
// Indexing

Var gather_rows(const Var& a, std::vector<std::uint32_t> index) {
    require(a.valid(), "gather_rows: invalid operand");
    return gather_rows_shared(a, std::make_shared<const Index>(std::move(index)));
}

Var scatter_add_rows(const Var& a, std::vector<std::uint32_t> index, std::size_t rows) {
    require(a.valid(), "scatter_add_rows: invalid operand");
    return scatter_add_rows_shared(a, std::make_shared<const Index>(std::move(index)), rows);
}

Var pick(const Var& a, std::vector<std::uint32_t> rows, std::vector<std::uint32_t> cols) {
    require(a.valid(), "pick: invalid operand");
    return pick_shared(a, std::make_shared<const Index>(std::move(rows)), std::make_shared<const Index>(std::move(cols)));
}

Var scatter_entries(const Var& v, std::vector<std::uint32_t> rows, std::vector<std::uint32_t> cols, std::size_t n_rows,
                    std::size_t n_cols) {
    require(v.valid(), "scatter_entries: invalid operand");
    return scatter_entries_shared(v, std::make_shared<const Index>(std::move(rows)),
                                  std::make_shared<const Index>(std::move(cols)), n_rows, n_cols);
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t count) {
    require(a.valid(), "slice_cols: invalid operand");
    const Tensor& x = a.value();
    if (begin + count > x.cols) throw std::out_of_range("slice_cols: range exceeds column count");
    Tensor out(x.rows, count);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < count; ++c) out(r, c) = x(r, begin + c);
    const std::size_t total = x.cols;
    return a.tape().record(std::move(out), {a}, [begin, total](const Var&, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
        gi[0] = embed_cols(g, begin, total);
    });
}

Var embed_cols(const Var& a, std::size_t begin, std::size_t total) {
    require(a.valid(), "embed_cols: invalid operand");
    const Tensor& x = a.value();
    if (begin + x.cols > total) throw std::out_of_range("embed_cols: range exceeds column count");
    std::vector<Var> parts;
    Tape& t = a.tape();
    if (begin > 0) parts.push_back(t.constant(Tensor(x.rows, begin)));
    parts.push_back(a);
    if (begin + x.cols < total) parts.push_back(t.constant(Tensor(x.rows, total - begin - x.cols)));
    return parts.size() == 1 ? a : concat_cols(parts);
}

Var concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols: no operands");
    Tape& t = parts.front().tape();
    const std::size_t rows = parts.front().value().rows;
    std::size_t total = 0;
    for (const auto& p : parts) {
        common_tape(parts.front(), p);
        if (p.value().rows != rows) throw std::invalid_argument("concat_cols: row counts differ");
        total += p.value().cols;
    }
    Tensor out(rows, total);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const Tensor& x = p.value();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < x.cols; ++c) out(r, off + c) = x(r, c);
        offsets.push_back(off);
        off += x.cols;
    }
    std::vector<std::size_t> widths;
    for (const auto& p : parts) widths.push_back(p.value().cols);
    return t.record(std::move(out), parts,
                    [offsets, widths](const Var&, const Var& g, const std::vector<bool>& need, std::vector<Var>& gi) {
                        for (std::size_t k = 0; k < offsets.size(); ++k) {
                            if (need[k]) gi[k] = slice_cols(g, offsets[k], widths[k]);
                        }
                    });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t count) {
    require(a.valid(), "slice_rows: invalid operand");
    const Tensor& x = a.value();
    if (begin + count > x.rows) throw std::out_of_range("slice_rows: range exceeds row count");
    Tensor out(count, x.cols);
    std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(begin * x.cols), count * x.cols, out.data.begin());
    const std::size_t total = x.rows;
    return a.tape().record(std::move(out), {a}, [begin, count, total](const Var&, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
        Tape& tp = g.tape();
        const std::size_t cols = g.value().cols;
        std::vector<Var> parts;
        if (begin > 0) parts.push_back(tp.constant(Tensor(begin, cols)));
        parts.push_back(g);
        if (begin + count < total) parts.push_back(tp.constant(Tensor(total - begin - count, cols)));
        gi[0] = parts.size() == 1 ? g : concat_rows(parts);
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_rows: no operands");
    Tape& t = parts.front().tape();
    const std::size_t cols = parts.front().value().cols;
    std::size_t total = 0;
    for (const auto& p : parts) {
        common_tape(parts.front(), p);
        if (p.value().cols != cols) throw std::invalid_argument("concat_rows: column counts differ");
        total += p.value().rows;
    }
    Tensor out(total, cols);
    std::vector<std::size_t> offsets, heights;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const Tensor& x = p.value();
        std::copy(x.data.begin(), x.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off * cols));
        offsets.push_back(off);
        heights.push_back(x.rows);
        off += x.rows;
    }
    return t.record(std::move(out), parts,
                    [offsets, heights](const Var&, const Var& g, const std::vector<bool>& need, std::vector<Var>& gi) {
                        for (std::size_t k = 0; k < offsets.size(); ++k) {
                            if (need[k]) gi[k] = slice_rows(g, offsets[k], heights[k]);
                        }
                    });
}

// ---------------------------------------------------------------------------
// Softmax family

Var log_softmax(const Var& logits) {
    require(logits.valid(), "log_softmax: invalid operand");
    const Tensor& x = logits.value();
    Tensor out(x.rows, x.cols);
    for (std::size_t r = 0; r < x.rows; ++r) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < x.cols; ++c) m = std::max(m, x(r, c));
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols; ++c) s += std::exp(x(r, c) - m);
        const double lse = m + std::log(s);
        for (std::size_t c = 0; c < x.cols; ++c) out(r, c) = x(r, c) - lse;
    }
    return logits.tape().record(std::move(out), {logits}, [](const Var& self, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
        gi[0] = sub(g, mul_col(exp(self), row_sum(g)));
    });
}

Var row_softmax(const Var& logits) {
    require(logits.valid(), "row_softmax: invalid operand");
    const Tensor& x = logits.value();
    Tensor out(x.rows, x.cols);
    for (std::size_t r = 0; r < x.rows; ++r) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < x.cols; ++c) m = std::max(m, x(r, c));
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols; ++c) {
            out(r, c) = std::exp(x(r, c) - m);
            s += out(r, c);
        }
        for (std::size_t c = 0; c < x.cols; ++c) out(r, c) /= s;
    }
    return logits.tape().record(std::move(out), {logits}, [](const Var& self, const Var& g, const std::vector<bool>&, std::vector<Var>& gi) {
        const Var gy = mul(g, self);
        gi[0] = sub(gy, mul_col(self, row_sum(gy)));
    });
}

// ---------------------------------------------------------------------------
// Composites

Var masked_cross_entropy(const Var& logits, std::span<const std::uint32_t> nodes, std::span<const int> labels) {
    if (nodes.empty()) throw std::invalid_argument("masked_cross_entropy: empty node set");
    if (nodes.size() != labels.size()) throw std::invalid_argument("masked_cross_entropy: one label per node required");
    Index rows(nodes.begin(), nodes.end());
    Index cols;
    cols.reserve(labels.size());
    for (int l : labels) {
        if (l < 0) throw std::invalid_argument("masked_cross_entropy: negative label");
        cols.push_back(static_cast<std::uint32_t>(l));
    }
    const double k = static_cast<double>(nodes.size());
    return scale(sum_all(pick(log_softmax(logits), std::move(rows), std::move(cols))), -1.0 / k);
}

Var segment_softmax(const Var& values, std::span<const std::uint32_t> segment, std::size_t num_segments,
                    const Var& entry_weights) {
    const Tensor& v = values.value();
    if (segment.size() != v.rows) throw std::invalid_argument("segment_softmax: one segment id per entry required");
    if (entry_weights.value().rows != v.rows || entry_weights.value().cols != 1) {
        throw std::invalid_argument("segment_softmax: one weight per entry required");
    }
    // Per-segment max shift; constant, it cancels in the normalization.
    Tensor seg_max(num_segments, v.cols, -std::numeric_limits<double>::infinity());
    for (std::size_t e = 0; e < v.rows; ++e) {
        if (segment[e] >= num_segments) throw std::out_of_range("segment_softmax: segment id out of range");
        for (std::size_t c = 0; c < v.cols; ++c) seg_max(segment[e], c) = std::max(seg_max(segment[e], c), v(e, c));
    }
    Tensor shift(v.rows, v.cols);
    for (std::size_t e = 0; e < v.rows; ++e)
        for (std::size_t c = 0; c < v.cols; ++c) shift(e, c) = -seg_max(segment[e], c);
    Tape& t = values.tape();
    const Var u = mul_col(exp(add(values, t.constant(std::move(shift)))), entry_weights);
    Index seg(segment.begin(), segment.end());
    auto seg_ptr = std::make_shared<const Index>(std::move(seg));
    const Var totals = scatter_add_rows_shared(u, seg_ptr, num_segments);
    const Var denom = gather_rows_shared(totals, seg_ptr);
    return mul(u, pow(denom, -1.0));
}

double finite_diff_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
    Tensor analytic;
    {
        Tape t;
        const Var in = t.variable(x);
        const Var out = f(t, in);
        analytic = t.gradients(out, std::span<const Var>(&in, 1)).front();
    }
    auto eval = [&](const Tensor& point) {
        Tape t;
        const Var in = t.constant(point);
        return f(t, in).value().item();
    };
    double worst = 0.0;
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + eps;
        const double up = eval(probe);
        probe.data[i] = orig - eps;
        const double down = eval(probe);
        probe.data[i] = orig;
        const double numeric = (up - down) / (2.0 * eps);
        const double a = analytic.data[i];
        const double err = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace symbiotic::ad
