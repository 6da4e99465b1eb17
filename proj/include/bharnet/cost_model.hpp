#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bharnet/models.hpp"

namespace bharnet {

// Analytic cost accounting. Conventions: one multiply-add counts as 2 FLOPs;
// softmax, normalization and nonlinearity FLOPs are ignored; parameters are
// counted with biases (frozen random-feature buffers are not parameters).
struct CostEntry {
    int64_t flops = 0;
    int64_t params = 0;

    CostEntry& operator+=(const CostEntry& other) {
        flops += other.flops;
        params += other.params;
        return *this;
    }
};

struct CostReport {
    int64_t flops = 0;
    int64_t params = 0;
    std::vector<std::pair<std::string, CostEntry>> breakdown;

    void add(const std::string& name, CostEntry entry);
};

// Fully connected layer with bias applied to `tokens` positions.
CostEntry fc_cost(int64_t c_in, int64_t c_out, int64_t tokens);

// Bias-free projection matrix applied per token.
CostEntry projection_cost(int64_t c_in, int64_t c_out, int64_t tokens);

// Dense convolution: 2 * C_in * C_out * k * (output positions).
int64_t conv_flops(int64_t c_in, int64_t c_out, int64_t kernel, int64_t out_positions);

// Graph aggregation over S subsets: 2 * S * C * V^2 * T * I.
int64_t graph_aggregation_flops(int64_t subsets, int64_t channels, int64_t nodes, int64_t frames, int64_t instances);

// Exact attention: 4 * Lq * Lk * d + 2 * Lq * Lk * d_v.
int64_t exact_attention_flops(int64_t l_q, int64_t l_k, int64_t d, int64_t d_v);

// Fast attention: 2 * m * (Lq + Lk) * (d + d_v) + 2 * (Lq + Lk) * m * d.
int64_t fast_attention_flops(int64_t l_q, int64_t l_k, int64_t d, int64_t d_v, int64_t m);

// Whole-model account for one forward pass of one sample. `expert_only`
// restricts the expertized variant to its two expert branches (light-weight
// inference). Multiple modality streams replicate the whole model.
CostReport count_cost(const ModelConfig& config, bool expert_only = false,
                      const std::vector<std::string>& streams = {"joint"});

}  // namespace bharnet
