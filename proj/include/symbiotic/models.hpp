#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "symbiotic/adjacency.hpp"
#include "symbiotic/autodiff.hpp"

namespace symbiotic {

enum class Arch : std::uint32_t { gcn = 1, gat = 2, appnp = 3, gprgnn = 4 };

std::string to_string(Arch arch);
Arch arch_from_string(const std::string& s);

struct ModelSpec {
    Arch arch = Arch::gcn;
    std::size_t in_dim = 0;
    std::size_t hidden = 64;
    std::size_t num_classes = 0;
    std::size_t heads = 8;  // GAT first layer; hidden is split evenly across heads
    std::size_t hops = 10;  // APPNP / GPRGNN propagation steps
    double alpha = 0.1;     // APPNP teleport, GPRGNN init
    double dropout = 0.5;
    double leaky_slope = 0.2;

    /// Defaults for an architecture: hidden 64 everywhere (GAT: 8 heads x 8).
    static ModelSpec defaults(Arch arch, std::size_t in_dim, std::size_t num_classes);
};

/// Weights of one model, in a fixed per-architecture order.
///   GCN:    W1, b1, W2, b2
///   GAT:    W1, a_src1, a_dst1, b1, W2, a_src2, a_dst2, b2
///   APPNP:  W1, b1, W2, b2
///   GPRGNN: W1, b1, W2, b2, gamma (1 x hops+1)
/// GAT attention vectors are stored block-diagonally as (heads*F x heads).
struct ModelParams {
    ModelSpec spec;
    std::vector<Tensor> tensors;
};

ModelParams init_model(const ModelSpec& spec, std::uint64_t seed);

/// Features as a constant sparse matrix, shared across tapes.
CsrPtr make_features(const Graph& g);

struct ForwardOptions {
    bool training = false;
    std::uint64_t dropout_seed = 0;
};

/// Logits (n x C). `params` are tape variables or constants matching
/// init_model's layout. Gradients reach both params and adjacency weights.
ad::Var forward(const ModelSpec& spec, std::span<const ad::Var> params, const Adjacency& adj, const CsrPtr& features,
                const ForwardOptions& options = {});

/// Places every tensor of `params` on `tape` as a constant (or a variable).
std::vector<ad::Var> place(ad::Tape& tape, const ModelParams& params, bool requires_grad = false);

/// Evaluation-mode logits of fixed params on a discrete graph.
Tensor predict_logits(const ModelParams& params, const Graph& g, const CsrPtr& features = nullptr);

/// argmax per row, ties toward the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits, std::span<const NodeId> nodes);
std::vector<int> predict(const ModelParams& params, const Graph& g, std::span<const NodeId> nodes);
double accuracy(const Tensor& logits, std::span<const NodeId> nodes, std::span<const int> labels);
double accuracy(const ModelParams& params, const Graph& g, std::span<const NodeId> nodes);

// Checkpoints: see docs/checkpoint_format.md.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace symbiotic
