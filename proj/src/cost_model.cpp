#include "bharnet/cost_model.hpp"

namespace bharnet {

void CostReport::add(const std::string& name, CostEntry entry) {
    flops += entry.flops;
    params += entry.params;
    breakdown.emplace_back(name, entry);
}

CostEntry fc_cost(int64_t c_in, int64_t c_out, int64_t tokens) {
    return CostEntry{2 * c_in * c_out * tokens, c_in * c_out + c_out};
}

CostEntry projection_cost(int64_t c_in, int64_t c_out, int64_t tokens) {
    return CostEntry{2 * c_in * c_out * tokens, c_in * c_out};
}

int64_t conv_flops(int64_t c_in, int64_t c_out, int64_t kernel, int64_t out_positions) {
    return 2 * c_in * c_out * kernel * out_positions;
}

int64_t graph_aggregation_flops(int64_t subsets, int64_t channels, int64_t nodes, int64_t frames,
                                int64_t instances) {
    return 2 * subsets * channels * nodes * nodes * frames * instances;
}

int64_t exact_attention_flops(int64_t l_q, int64_t l_k, int64_t d, int64_t d_v) {
    return 4 * l_q * l_k * d + 2 * l_q * l_k * d_v;
}

int64_t fast_attention_flops(int64_t l_q, int64_t l_k, int64_t d, int64_t d_v, int64_t m) {
    return 2 * m * (l_q + l_k) * (d + d_v) + 2 * (l_q + l_k) * m * d;
}

namespace {

CostEntry backbone_cost(const BackboneConfig& config, int64_t frames, int64_t instances, int64_t nodes) {
    const int64_t subsets = config.partition == Partition::uniform ? 1 : 3;
    CostEntry total;
    int64_t t = frames;
    for (int b = 0; b < config.blocks(); ++b) {
        const int64_t c_in = config.channels[static_cast<size_t>(b)];
        const int64_t c_out = config.channels[static_cast<size_t>(b + 1)];
        const int64_t t_out = (t + config.strides[static_cast<size_t>(b)] - 1) / config.strides[static_cast<size_t>(b)];
        total.flops += graph_aggregation_flops(subsets, c_in, nodes, t, instances);
        total.flops += subsets * conv_flops(c_in, c_out, 1, t * instances * nodes);
        total.flops += conv_flops(c_out, c_out, config.temporal_kernel, t_out * instances * nodes);
        total.params += subsets * c_in * c_out;            // spatial weights
        total.params += 2 * c_out;                         // normalization scale/shift
        total.params += c_out * c_out * config.temporal_kernel;
        t = t_out;
    }
    return total;
}

// One cross-attention direction over L_q query tokens and L_k context
// tokens: four projections plus the attention core.
CostEntry direction_cost(int64_t channels, int64_t d, int64_t l_q, int64_t l_k, AttentionKind kind, int64_t m) {
    CostEntry total;
    total += projection_cost(channels, d, l_q);  // queries
    total += projection_cost(channels, d, l_k);  // keys
    total += projection_cost(channels, d, l_k);  // values
    total += projection_cost(d, channels, l_q);  // output
    total.flops += kind == AttentionKind::exact ? exact_attention_flops(l_q, l_k, d, d)
                                                : fast_attention_flops(l_q, l_k, d, d, m);
    return total;
}

CostEntry cross_attention_cost(int64_t channels, int64_t d, int64_t l_body, int64_t l_hand, AttentionKind kind,
                               int64_t m) {
    CostEntry total = direction_cost(channels, d, l_body, l_hand, kind, m);
    total += direction_cost(channels, d, l_hand, l_body, kind, m);
    return total;
}

}  // namespace

CostReport count_cost(const ModelConfig& config, bool expert_only, const std::vector<std::string>& streams) {
    config.validate();
    if (streams.empty()) throw ValidationError("count_cost: at least one stream required");
    if (expert_only && config.variant != Variant::expertized) {
        throw ValidationError("count_cost: expert-only inference applies to the expertized variant");
    }

    const int64_t nodes = kPaddedHandNodes;
    const int64_t instances = kInstances;
    const int64_t c = config.backbone.out_channels();
    const int64_t d = config.attention_dim();
    const int64_t k = config.num_classes;
    const int64_t m = config.feature_count;
    const int64_t t_out = config.backbone.out_frames(config.frames);
    const int64_t flat_tokens = t_out * instances * nodes;

    CostReport report;
    for (const std::string& stream : streams) {
        const std::string prefix = stream + ".";
        const CostEntry backbone = backbone_cost(config.backbone, config.frames, instances, nodes);
        report.add(prefix + "body.backbone", backbone);
        report.add(prefix + "hand.backbone", backbone);

        switch (config.variant) {
            case Variant::score_fusion:
                report.add(prefix + "body.head", fc_cost(c, k, 1));
                report.add(prefix + "hand.head", fc_cost(c, k, 1));
                break;
            case Variant::standard_xattn:
            case Variant::fast_xattn: {
                const AttentionKind kind =
                    config.variant == Variant::standard_xattn ? AttentionKind::exact : AttentionKind::fast;
                report.add(prefix + "xattn", cross_attention_cost(c, d, flat_tokens, flat_tokens, kind, m));
                report.add(prefix + "body.head", fc_cost(c, k, 1));
                report.add(prefix + "hand.head", fc_cost(c, k, 1));
                break;
            }
            case Variant::pam: {
                const std::pair<const char*, int64_t> axes[] = {
                    {"pam.T", t_out}, {"pam.V", nodes}, {"pam.I", instances}};
                for (const auto& [name, len] : axes) {
                    report.add(prefix + name,
                               cross_attention_cost(c, d, len, len, AttentionKind::fast, m));
                }
                report.add(prefix + "body.head", fc_cost(c, k, 1));
                report.add(prefix + "hand.head", fc_cost(c, k, 1));
                break;
            }
            case Variant::expertized: {
                report.add(prefix + "body.head", fc_cost(c, k, 1));
                report.add(prefix + "hand.head", fc_cost(c, k, 1));
                if (!expert_only) {
                    report.add(prefix + "xattn",
                               cross_attention_cost(c, d, flat_tokens, flat_tokens, AttentionKind::fast, m));
                    report.add(prefix + "body.ihead", fc_cost(c, k, 1));
                    report.add(prefix + "hand.ihead", fc_cost(c, k, 1));
                }
                break;
            }
        }
    }
    return report;
}

}  // namespace bharnet
