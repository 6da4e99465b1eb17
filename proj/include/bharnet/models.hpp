#pragma once

#include <string>
#include <vector>

#include "bharnet/attention.hpp"
#include "bharnet/graph_layers.hpp"
#include "bharnet/params.hpp"
#include "bharnet/skeleton.hpp"
#include "bharnet/topology.hpp"

namespace bharnet {

enum class Variant { score_fusion, standard_xattn, fast_xattn, pam, expertized };

std::string variant_name(Variant variant);
Variant variant_from_name(const std::string& name);

struct LossWeights {
    double body = 1.0;
    double hand = 1.0;
    double cpl = 1.0;

    void validate() const;
};

// ---- tensor-level logit algebra ----

// Mean over the batch of -log softmax(logits)[label], max-stabilized.
double cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Elementwise arithmetic mean of equally shaped logit tensors.
Tensor fuse_logits_avg(const std::vector<Tensor>& logits);

// Argmax with lowest-index tie-break.
int argmax_class(const double* row, int64_t num_classes);
std::vector<int> predict_classes(const Tensor& logits);

struct BranchOutputs {
    Tensor y1;  // expert body
    Tensor y2;  // expert hand
    Tensor y3;  // interactive body
    Tensor y4;  // interactive hand
    Tensor fused;
};

// Light-weight inference from the expertized branches alone.
Tensor expert_only_logits(const BranchOutputs& outputs);

// ---- graph-level losses ----

ad::Var dual_stream_loss(const ad::Var& body_logits, const ad::Var& hand_logits, const std::vector<int>& labels,
                         const LossWeights& weights);

struct BranchVars {
    ad::Var y1, y2, y3, y4, fused;
};

// Individual losses go to the interactive branches only; the complementary
// loss covers the four-branch sum.
ad::Var bharnet_e_loss(const BranchVars& branches, const std::vector<int>& labels, const LossWeights& weights);

// ---- model assembly ----

struct ModelConfig {
    Variant variant = Variant::score_fusion;
    int num_classes = 12;
    int64_t frames = 32;  // model-input T
    BackboneConfig backbone;
    int64_t proj_dim = 0;       // attention projection width; 0 means backbone output width
    int64_t feature_count = 64; // random features for fast attention

    int64_t attention_dim() const { return proj_dim > 0 ? proj_dim : backbone.out_channels(); }
    void validate() const;
};

struct ModelOutputs {
    ad::Var body_logits;
    ad::Var hand_logits;
    bool has_branches = false;
    BranchVars branches;  // expertized variant only

    // Score-level fusion: average for dual-stream variants, four-branch sum
    // for the expertized variant.
    ad::Var fused() const;
};

// One full two-stream model (a body backbone, a hand backbone and the
// variant-specific fusion machinery) with its own parameter store.
class BharnetModel {
public:
    BharnetModel(ModelConfig config, GraphTopology body_topology, GraphTopology hand_topology, uint64_t seed);

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // x_body / x_hand: [N, 3, T, 2, V] stream tensors of one modality.
    ModelOutputs forward(GraphCtx& ctx, const ad::Var& x_body, const ad::Var& x_hand);

    ad::Var loss(const ModelOutputs& outputs, const std::vector<int>& labels, const LossWeights& weights) const;

    GraphCtx make_ctx(bool training);

private:
    ModelConfig config_;
    GraphTopology body_topology_;
    GraphTopology hand_topology_;
    AdjacencyStack body_adjacency_;
    AdjacencyStack hand_adjacency_;
    ParamStore params_;
};

}  // namespace bharnet
