#include "bharnet/models.hpp"

namespace bharnet {

using ad::Var;

std::string variant_name(Variant variant) {
    switch (variant) {
        case Variant::score_fusion: return "score_fusion";
        case Variant::standard_xattn: return "standard_xattn";
        case Variant::fast_xattn: return "fast_xattn";
        case Variant::pam: return "pam";
        case Variant::expertized: return "expertized";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    if (name == "score_fusion") return Variant::score_fusion;
    if (name == "standard_xattn") return Variant::standard_xattn;
    if (name == "fast_xattn") return Variant::fast_xattn;
    if (name == "pam") return Variant::pam;
    if (name == "expertized") return Variant::expertized;
    throw ValidationError("unknown model variant '" + name + "'");
}

void LossWeights::validate() const {
    if (body < 0.0 || hand < 0.0 || cpl < 0.0) throw ValidationError("loss weights must be nonnegative");
}

double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    return ad::cross_entropy_mean(ad::constant(logits), labels)->value[0];
}

Tensor fuse_logits_avg(const std::vector<Tensor>& logits) {
    if (logits.empty()) throw ValidationError("fuse_logits_avg: empty logit list");
    Tensor out = logits[0];
    for (size_t i = 1; i < logits.size(); ++i) {
        if (!logits[i].same_shape(out)) {
            throw ValidationError("fuse_logits_avg: shape mismatch at entry " + std::to_string(i));
        }
        out.add_scaled(logits[i], 1.0);
    }
    const double inv = 1.0 / static_cast<double>(logits.size());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= inv;
    return out;
}

int argmax_class(const double* row, int64_t num_classes) {
    int best = 0;
    for (int64_t k = 1; k < num_classes; ++k) {
        if (row[k] > row[best]) best = static_cast<int>(k);
    }
    return best;
}

std::vector<int> predict_classes(const Tensor& logits) {
    if (logits.rank() != 2) throw ValidationError("predict_classes: logits must be 2-d");
    const int64_t n = logits.dim(0), k = logits.dim(1);
    std::vector<int> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = argmax_class(logits.data() + i * k, k);
    return out;
}

Tensor expert_only_logits(const BranchOutputs& outputs) {
    Tensor out = outputs.y1;
    out.add_scaled(outputs.y2, 1.0);
    return out;
}

Var dual_stream_loss(const Var& body_logits, const Var& hand_logits, const std::vector<int>& labels,
                     const LossWeights& weights) {
    weights.validate();
    Var total = ad::scale(ad::cross_entropy_mean(body_logits, labels), weights.body);
    total = ad::add(total, ad::scale(ad::cross_entropy_mean(hand_logits, labels), weights.hand));
    Var fused = ad::scale(ad::add(body_logits, hand_logits), 0.5);
    return ad::add(total, ad::scale(ad::cross_entropy_mean(fused, labels), weights.cpl));
}

Var bharnet_e_loss(const BranchVars& branches, const std::vector<int>& labels, const LossWeights& weights) {
    weights.validate();
    Var total = ad::scale(ad::cross_entropy_mean(branches.y3, labels), weights.body);
    total = ad::add(total, ad::scale(ad::cross_entropy_mean(branches.y4, labels), weights.hand));
    return ad::add(total, ad::scale(ad::cross_entropy_mean(branches.fused, labels), weights.cpl));
}

void ModelConfig::validate() const {
    backbone.validate();
    if (num_classes < 2) throw ValidationError("model config: num_classes must be >= 2");
    if (frames < 2) throw ValidationError("model config: frames must be >= 2");
    if (feature_count < 1) throw ValidationError("model config: feature count must be >= 1");
    if (proj_dim < 0) throw ValidationError("model config: projection width must be nonnegative");
}

Var ModelOutputs::fused() const {
    if (has_branches) return branches.fused;
    return ad::scale(ad::add(body_logits, hand_logits), 0.5);
}

BharnetModel::BharnetModel(ModelConfig config, GraphTopology body_topology, GraphTopology hand_topology,
                           uint64_t seed)
    : config_(std::move(config)), body_topology_(std::move(body_topology)), hand_topology_(std::move(hand_topology)) {
    config_.validate();
    body_adjacency_ = normalize_adjacency(body_topology_, config_.backbone.partition);
    hand_adjacency_ = normalize_adjacency(hand_topology_, config_.backbone.partition);

    Rng rng(Rng::mix(seed, 0x6d6f64656cULL));
    const int64_t c = config_.backbone.out_channels();
    const int64_t d = config_.attention_dim();
    const int64_t k = config_.num_classes;

    init_backbone_params(params_, "body.", config_.backbone, rng);
    init_backbone_params(params_, "hand.", config_.backbone, rng);
    init_linear_params(params_, "body.head.", c, k, rng);
    init_linear_params(params_, "hand.head.", c, k, rng);

    switch (config_.variant) {
        case Variant::score_fusion:
            break;
        case Variant::standard_xattn:
            init_cross_attention_params(params_, "xattn.", c, d, config_.feature_count, AttentionKind::exact, rng);
            break;
        case Variant::fast_xattn:
            init_cross_attention_params(params_, "xattn.", c, d, config_.feature_count, AttentionKind::fast, rng);
            break;
        case Variant::pam:
            init_pam_params(params_, "pam.", c, d, config_.feature_count, rng);
            break;
        case Variant::expertized:
            init_cross_attention_params(params_, "xattn.", c, d, config_.feature_count, AttentionKind::fast, rng);
            init_linear_params(params_, "body.ihead.", c, k, rng);
            init_linear_params(params_, "hand.ihead.", c, k, rng);
            break;
    }
}

GraphCtx BharnetModel::make_ctx(bool training) {
    GraphCtx ctx;
    ctx.store = &params_;
    ctx.training = training;
    return ctx;
}

ModelOutputs BharnetModel::forward(GraphCtx& ctx, const Var& x_body, const Var& x_hand) {
    ModelOutputs out;
    Var f_body = backbone_forward(ctx, "body.", config_.backbone, body_adjacency_, x_body);
    Var f_hand = backbone_forward(ctx, "hand.", config_.backbone, hand_adjacency_, x_hand);

    switch (config_.variant) {
        case Variant::score_fusion: {
            out.body_logits = linear(ctx, "body.head.", ad::reduce_mean(f_body, {2, 3, 4}, false));
            out.hand_logits = linear(ctx, "hand.head.", ad::reduce_mean(f_hand, {2, 3, 4}, false));
            break;
        }
        case Variant::standard_xattn:
        case Variant::fast_xattn: {
            const AttentionKind kind =
                config_.variant == Variant::standard_xattn ? AttentionKind::exact : AttentionKind::fast;
            CrossAttended attended =
                cross_attend(ctx, "xattn.", flatten_tokens(f_body), flatten_tokens(f_hand), kind);
            out.body_logits = linear(ctx, "body.head.", ad::reduce_mean(attended.body, {1}, false));
            out.hand_logits = linear(ctx, "hand.head.", ad::reduce_mean(attended.hand, {1}, false));
            break;
        }
        case Variant::pam: {
            PamOutputs pam = pam_forward(ctx, "pam.", "body.head.", "hand.head.", f_body, f_hand);
            out.body_logits = pam.body_logits;
            out.hand_logits = pam.hand_logits;
            break;
        }
        case Variant::expertized: {
            out.has_branches = true;
            out.branches.y1 = linear(ctx, "body.head.", ad::reduce_mean(f_body, {2, 3, 4}, false));
            out.branches.y2 = linear(ctx, "hand.head.", ad::reduce_mean(f_hand, {2, 3, 4}, false));
            CrossAttended attended = cross_attend(ctx, "xattn.", flatten_tokens(f_body), flatten_tokens(f_hand),
                                                  AttentionKind::fast);
            out.branches.y3 = linear(ctx, "body.ihead.", ad::reduce_mean(attended.body, {1}, false));
            out.branches.y4 = linear(ctx, "hand.ihead.", ad::reduce_mean(attended.hand, {1}, false));
            out.branches.fused =
                ad::add(ad::add(out.branches.y1, out.branches.y2), ad::add(out.branches.y3, out.branches.y4));
            out.body_logits = out.branches.y1;
            out.hand_logits = out.branches.y2;
            break;
        }
    }
    return out;
}

Var BharnetModel::loss(const ModelOutputs& outputs, const std::vector<int>& labels,
                       const LossWeights& weights) const {
    if (outputs.has_branches) return bharnet_e_loss(outputs.branches, labels, weights);
    return dual_stream_loss(outputs.body_logits, outputs.hand_logits, labels, weights);
}

}  // namespace bharnet
