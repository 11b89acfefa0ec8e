#include "symbiotic/models.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "symbiotic/random.hpp"

namespace symbiotic {

using namespace ad;

std::string to_string(Arch arch) {
    switch (arch) {
        case Arch::gcn: return "gcn";
        case Arch::gat: return "gat";
        case Arch::appnp: return "appnp";
        case Arch::gprgnn: return "gprgnn";
    }
    return "unknown";
}

Arch arch_from_string(const std::string& s) {
    if (s == "gcn" || s == "GCN") return Arch::gcn;
    if (s == "gat" || s == "GAT") return Arch::gat;
    if (s == "appnp" || s == "APPNP") return Arch::appnp;
    if (s == "gprgnn" || s == "GPRGNN") return Arch::gprgnn;
    throw std::invalid_argument("unknown architecture: " + s);
}

ModelSpec ModelSpec::defaults(Arch arch, std::size_t in_dim, std::size_t num_classes) {
    ModelSpec s;
    s.arch = arch;
    s.in_dim = in_dim;
    s.num_classes = num_classes;
    return s;
}

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::size_t rows, std::size_t cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(rows, cols);
    for (auto& x : t.data) x = (2.0 * rng.uniform() - 1.0) * limit;
    return t;
}

// Block-diagonal (heads*F x heads) attention vectors.
Tensor attention_init(std::size_t heads, std::size_t per_head, Rng& rng) {
    Tensor t(heads * per_head, heads);
    const double limit = std::sqrt(6.0 / static_cast<double>(per_head + 1));
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t f = 0; f < per_head; ++f) t(h * per_head + f, h) = (2.0 * rng.uniform() - 1.0) * limit;
    return t;
}

Tensor block_mask(std::size_t heads, std::size_t per_head) {
    Tensor t(heads * per_head, heads);
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t f = 0; f < per_head; ++f) t(h * per_head + f, h) = 1.0;
    return t;
}

void check_spec(const ModelSpec& s) {
    if (s.in_dim == 0 || s.hidden == 0 || s.num_classes == 0) throw std::invalid_argument("ModelSpec: zero dimension");
    if (s.arch == Arch::gat && (s.heads == 0 || s.hidden % s.heads != 0)) {
        throw std::invalid_argument("ModelSpec: GAT hidden size must be a multiple of the head count");
    }
    if ((s.arch == Arch::appnp || s.arch == Arch::gprgnn) && !(s.alpha >= 0.0 && s.alpha <= 1.0)) {
        throw std::invalid_argument("ModelSpec: alpha must lie in [0, 1]");
    }
}

std::size_t expected_tensor_count(Arch arch) {
    switch (arch) {
        case Arch::gcn:
        case Arch::appnp: return 4;
        case Arch::gat: return 8;
        case Arch::gprgnn: return 5;
    }
    return 0;
}

Var features_times(const CsrPtr& x, const Var& w) { return csr_matmul(x, w, false); }

Var hidden_dropout(const Var& h, const ModelSpec& spec, const ForwardOptions& opt) {
    if (!opt.training || spec.dropout <= 0.0) return h;
    return dropout(h, spec.dropout, opt.dropout_seed);
}

Var gat_layer(const Var& h, const Var& a_src, const Var& a_dst, std::size_t heads, std::size_t per_head,
              const Adjacency& adj, double slope) {
    Var src_vec = a_src, dst_vec = a_dst;
    if (heads > 1) {
        const Tensor mask = block_mask(heads, per_head);
        src_vec = mul_const(a_src, mask);
        dst_vec = mul_const(a_dst, mask);
    }
    const SparsePattern& p = *adj.pattern;
    const Var s_src = matmul(h, src_vec);
    const Var s_dst = matmul(h, dst_vec);
    const Var logits = leaky_relu(add(gather_rows(s_dst, p.dst), gather_rows(s_src, p.src)), slope);
    const Var entry_weights = gather_rows(adj.raw, p.slot);
    const Var attention = segment_softmax(logits, p.dst, p.num_nodes, entry_weights);
    auto per_entry = std::make_shared<const SparsePattern>(p.with_entry_slots());
    if (heads == 1) return spmm(per_entry, attention, h);
    std::vector<Var> outs;
    outs.reserve(heads);
    for (std::size_t k = 0; k < heads; ++k) {
        outs.push_back(spmm(per_entry, slice_cols(attention, k, 1), slice_cols(h, k * per_head, per_head)));
    }
    return concat_cols(outs);
}

Var mlp(std::span<const Var> p, const ModelSpec& spec, const CsrPtr& x, const ForwardOptions& opt) {
    const Var h = hidden_dropout(relu(add_row(features_times(x, p[0]), p[1])), spec, opt);
    return add_row(matmul(h, p[2]), p[3]);
}

}  // namespace

ModelParams init_model(const ModelSpec& spec, std::uint64_t seed) {
    check_spec(spec);
    Rng rng(seed);
    ModelParams m;
    m.spec = spec;
    const std::size_t d = spec.in_dim, h = spec.hidden, c = spec.num_classes;
    switch (spec.arch) {
        case Arch::gcn:
        case Arch::appnp:
            m.tensors.push_back(glorot(d, h, d, h, rng));
            m.tensors.emplace_back(1, h);
            m.tensors.push_back(glorot(h, c, h, c, rng));
            m.tensors.emplace_back(1, c);
            break;
        case Arch::gprgnn: {
            m.tensors.push_back(glorot(d, h, d, h, rng));
            m.tensors.emplace_back(1, h);
            m.tensors.push_back(glorot(h, c, h, c, rng));
            m.tensors.emplace_back(1, c);
            Tensor gamma(1, spec.hops + 1);
            for (std::size_t k = 0; k <= spec.hops; ++k) gamma(0, k) = spec.alpha * std::pow(1.0 - spec.alpha, static_cast<double>(k));
            m.tensors.push_back(std::move(gamma));
            break;
        }
        case Arch::gat: {
            const std::size_t f = h / spec.heads;
            m.tensors.push_back(glorot(d, h, d, h, rng));
            m.tensors.push_back(attention_init(spec.heads, f, rng));
            m.tensors.push_back(attention_init(spec.heads, f, rng));
            m.tensors.emplace_back(1, h);
            m.tensors.push_back(glorot(h, c, h, c, rng));
            m.tensors.push_back(attention_init(1, c, rng));
            m.tensors.push_back(attention_init(1, c, rng));
            m.tensors.emplace_back(1, c);
            break;
        }
    }
    return m;
}

CsrPtr make_features(const Graph& g) { return std::make_shared<const CsrMatrix>(CsrMatrix::from_dense(g.features)); }

Var forward(const ModelSpec& spec, std::span<const Var> p, const Adjacency& adj, const CsrPtr& x,
            const ForwardOptions& opt) {
    if (p.size() != expected_tensor_count(spec.arch)) throw std::invalid_argument("forward: wrong parameter count");
    if (x->rows != adj.num_nodes) throw std::invalid_argument("forward: feature rows differ from node count");
    if (x->cols != spec.in_dim) throw std::invalid_argument("forward: feature width differs from model input");
    switch (spec.arch) {
        case Arch::gcn: {
            const Var h = hidden_dropout(relu(add_row(spmm(adj.pattern, adj.normalized, features_times(x, p[0])), p[1])), spec, opt);
            return add_row(spmm(adj.pattern, adj.normalized, matmul(h, p[2])), p[3]);
        }
        case Arch::appnp: {
            const Var h = mlp(p, spec, x, opt);
            Var z = h;
            const Var teleport = scale(h, spec.alpha);
            for (std::size_t k = 0; k < spec.hops; ++k) {
                z = add(scale(spmm(adj.pattern, adj.normalized, z), 1.0 - spec.alpha), teleport);
            }
            return z;
        }
        case Arch::gprgnn: {
            const Var h = mlp(p, spec, x, opt);
            if (p[4].cols() != spec.hops + 1) throw std::invalid_argument("forward: GPRGNN coefficient count mismatch");
            Var z = h;
            Var out = scalar_mul(z, slice_cols(p[4], 0, 1));
            for (std::size_t k = 1; k <= spec.hops; ++k) {
                z = spmm(adj.pattern, adj.normalized, z);
                out = add(out, scalar_mul(z, slice_cols(p[4], k, 1)));
            }
            return out;
        }
        case Arch::gat: {
            const std::size_t f = spec.hidden / spec.heads;
            Var h = gat_layer(features_times(x, p[0]), p[1], p[2], spec.heads, f, adj, spec.leaky_slope);
            h = hidden_dropout(relu(add_row(h, p[3])), spec, opt);
            const Var out = gat_layer(matmul(h, p[4]), p[5], p[6], 1, spec.num_classes, adj, spec.leaky_slope);
            return add_row(out, p[7]);
        }
    }
    throw std::invalid_argument("forward: unknown architecture");
}

std::vector<Var> place(Tape& tape, const ModelParams& params, bool requires_grad) {
    std::vector<Var> out;
    out.reserve(params.tensors.size());
    for (const auto& t : params.tensors) out.push_back(requires_grad ? tape.variable(t) : tape.constant(t));
    return out;
}

Tensor predict_logits(const ModelParams& params, const Graph& g, const CsrPtr& features) {
    Tape tape;
    const CsrPtr x = features ? features : make_features(g);
    const auto vars = place(tape, params);
    const Adjacency adj = build_adjacency(graph_pairs(tape, g));
    return forward(params.spec, vars, adj, x).value();
}

std::vector<int> argmax_rows(const Tensor& logits, std::span<const NodeId> nodes) {
    std::vector<int> out;
    out.reserve(nodes.size());
    for (NodeId v : nodes) {
        const auto row = logits.row(v);
        std::size_t best = 0;
        for (std::size_t c = 1; c < row.size(); ++c) {
            if (row[c] > row[best]) best = c;
        }
        out.push_back(static_cast<int>(best));
    }
    return out;
}

std::vector<int> predict(const ModelParams& params, const Graph& g, std::span<const NodeId> nodes) {
    return argmax_rows(predict_logits(params, g), nodes);
}

double accuracy(const Tensor& logits, std::span<const NodeId> nodes, std::span<const int> labels) {
    if (nodes.empty()) throw std::invalid_argument("accuracy: empty node set");
    const auto pred = argmax_rows(logits, nodes);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < nodes.size(); ++k) hits += pred[k] == labels[nodes[k]] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(nodes.size());
}

double accuracy(const ModelParams& params, const Graph& g, std::span<const NodeId> nodes) {
    return accuracy(predict_logits(params, g), nodes, g.labels);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'S', 'Y', 'M', 'G', 'N', 'N', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}
void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}
void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("load_checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}
std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("load_checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    const ModelSpec& s = params.spec;
    out.write(kMagic, 8);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(s.arch));
    put_u64(out, s.in_dim);
    put_u64(out, s.hidden);
    put_u64(out, s.num_classes);
    put_u64(out, s.heads);
    put_u64(out, s.hops);
    put_f64(out, s.alpha);
    put_f64(out, s.dropout);
    put_f64(out, s.leaky_slope);
    put_u64(out, params.tensors.size());
    for (const auto& t : params.tensors) {
        put_u64(out, t.rows);
        put_u64(out, t.cols);
        for (double v : t.data) put_f64(out, v);
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("load_checkpoint: bad magic");
    if (get_u32(in) != kVersion) throw std::runtime_error("load_checkpoint: unsupported version");
    ModelParams m;
    ModelSpec& s = m.spec;
    const auto tag = get_u32(in);
    if (tag < 1 || tag > 4) throw std::runtime_error("load_checkpoint: unknown architecture tag");
    s.arch = static_cast<Arch>(tag);
    s.in_dim = get_u64(in);
    s.hidden = get_u64(in);
    s.num_classes = get_u64(in);
    s.heads = get_u64(in);
    s.hops = get_u64(in);
    s.alpha = get_f64(in);
    s.dropout = get_f64(in);
    s.leaky_slope = get_f64(in);
    const auto count = get_u64(in);
    if (count != expected_tensor_count(s.arch)) throw std::runtime_error("load_checkpoint: wrong tensor count");
    for (std::uint64_t k = 0; k < count; ++k) {
        const auto r = get_u64(in);
        const auto c = get_u64(in);
        if (r * c > (1ULL << 32)) throw std::runtime_error("load_checkpoint: implausible tensor size");
        Tensor t(r, c);
        for (auto& v : t.data) v = get_f64(in);
        m.tensors.push_back(std::move(t));
    }
    check_spec(s);
    return m;
}

}  // namespace symbiotic
