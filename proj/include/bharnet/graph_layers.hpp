#pragma once

#include <string>
#include <vector>

#include "bharnet/autodiff.hpp"
#include "bharnet/params.hpp"
#include "bharnet/rng.hpp"
#include "bharnet/topology.hpp"

namespace bharnet {

// out = sum_s (x x_V A_s) x_C W_s applied independently per (n, t, i).
// x: [N, C_in, T, I, V]; weights: [S, C_in, C_out]; out: [N, C_out, T, I, V].
ad::Var spatial_graph_conv(const ad::Var& x, const AdjacencyStack& adjacency, const ad::Var& weights);

// 1-D convolution along T with symmetric zero padding (k-1)/2 and stride
// subsampling; T' = ceil(T / stride). kernel: [C, C, k] (odd k).
ad::Var temporal_conv(const ad::Var& x, const ad::Var& kernel, int stride);

// Per-channel normalization over (N, T, I, V) with running statistics for
// evaluation. Training mode updates running_mean/running_var in place.
ad::Var batch_norm(const ad::Var& x, const ad::Var& gamma, const ad::Var& beta, Tensor& running_mean,
                   Tensor& running_var, bool training, double momentum = 0.1, double eps = 1e-5);

struct BackboneConfig {
    std::vector<int> channels = {3, 16, 32, 32, 64};  // input + per-block output widths
    std::vector<int> strides = {1, 2, 1, 2};          // temporal stride per block
    int temporal_kernel = 5;
    Partition partition = Partition::distance;

    int blocks() const { return static_cast<int>(strides.size()); }
    int out_channels() const { return channels.back(); }
    int64_t out_frames(int64_t t_in) const;
    void validate() const;
};

// Declares all parameters of one backbone stream under `prefix` (e.g.
// "body."): per block spatial weights, normalization scale/shift (+ running
// buffers), temporal kernels.
void init_backbone_params(ParamStore& store, const std::string& prefix, const BackboneConfig& config, Rng& rng);

// Chain of blocks, each spatial_graph_conv -> batch_norm -> relu ->
// temporal_conv. x: [N, 3, T, I, V] -> [N, C_out, T', I, V].
ad::Var backbone_forward(GraphCtx& ctx, const std::string& prefix, const BackboneConfig& config,
                         const AdjacencyStack& adjacency, const ad::Var& x);

}  // namespace bharnet
