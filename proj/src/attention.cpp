#include "bharnet/attention.hpp"

#include <cmath>

namespace bharnet {

using ad::Var;

Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0)) {
        throw ValidationError("softmax_attention: incompatible shapes " + shape_to_string(q.shape()) + ", " +
                              shape_to_string(k.shape()) + ", " + shape_to_string(v.shape()));
    }
    const int64_t lq = q.dim(0), d = q.dim(1), lk = k.dim(0), dv = v.dim(1);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor out({lq, dv});
    std::vector<double> scores(static_cast<size_t>(lk));
    for (int64_t i = 0; i < lq; ++i) {
        double mx = -1e300;
        for (int64_t j = 0; j < lk; ++j) {
            double acc = 0.0;
            for (int64_t x = 0; x < d; ++x) acc += q[i * d + x] * k[j * d + x];
            scores[static_cast<size_t>(j)] = acc * scale;
            mx = std::max(mx, scores[static_cast<size_t>(j)]);
        }
        double z = 0.0;
        for (int64_t j = 0; j < lk; ++j) {
            scores[static_cast<size_t>(j)] = std::exp(scores[static_cast<size_t>(j)] - mx);
            z += scores[static_cast<size_t>(j)];
        }
        const double inv = 1.0 / z;
        for (int64_t j = 0; j < lk; ++j) {
            const double w = scores[static_cast<size_t>(j)] * inv;
            for (int64_t y = 0; y < dv; ++y) out[i * dv + y] += w * v[j * dv + y];
        }
    }
    return out;
}

Tensor draw_random_features(int64_t d, int64_t m, uint64_t seed) {
    if (d < 1 || m < 1) throw ValidationError("random features: d and m must be >= 1");
    Rng rng(Rng::mix(seed, 0xfea7u));
    return Tensor::normal({d, m}, rng, 0.0, 1.0);
}

namespace {

// phi over a flat token matrix [R, d] -> [R, m].
Var feature_map(const Var& x_flat, const Var& features, int64_t d, int64_t m) {
    const double dim_scale = std::pow(static_cast<double>(d), -0.25);
    Var xs = ad::scale(x_flat, dim_scale);
    Var projected = ad::matmul(xs, features);                                  // [R, m]
    Var sq = ad::reduce_sum(ad::mul(xs, xs), {1}, /*keepdim=*/true);           // [R, 1]
    Var shifted = ad::sub_lastdim(projected, ad::scale(sq, 0.5));
    return ad::scale(ad::exp(shifted), 1.0 / std::sqrt(static_cast<double>(m)));
}

void check_batched(const Var& q, const Var& k, const Var& v) {
    const Shape& sq = q->value.shape();
    const Shape& sk = k->value.shape();
    const Shape& sv = v->value.shape();
    if (sq.size() != 3 || sk.size() != 3 || sv.size() != 3 || sq[0] != sk[0] || sk[0] != sv[0] || sq[2] != sk[2] ||
        sk[1] != sv[1]) {
        throw ValidationError("attention: incompatible shapes " + shape_to_string(sq) + ", " + shape_to_string(sk) +
                              ", " + shape_to_string(sv));
    }
}

}  // namespace

Var softmax_attention_batched(const Var& q, const Var& k, const Var& v) {
    check_batched(q, k, v);
    const int64_t d = q->value.shape()[2];
    Var scores = ad::scale(ad::bmm_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
    return ad::bmm(ad::softmax_lastdim(scores), v);
}

Var fast_attention_batched(const Var& q, const Var& k, const Var& v, const Tensor& features) {
    check_batched(q, k, v);
    const Shape& sq = q->value.shape();
    const int64_t batch = sq[0], lq = sq[1], d = sq[2];
    const int64_t lk = k->value.shape()[1];
    if (features.rank() != 2 || features.dim(0) != d) {
        throw ValidationError("fast_attention: features must be [d x m] with d=" + std::to_string(d) + ", got " +
                              shape_to_string(features.shape()));
    }
    const int64_t m = features.dim(1);
    Var w = ad::constant(features);

    Var phi_q = ad::reshape(feature_map(ad::reshape(q, {batch * lq, d}), w, d, m), {batch, lq, m});
    Var phi_k = ad::reshape(feature_map(ad::reshape(k, {batch * lk, d}), w, d, m), {batch, lk, m});

    Var key_mass = ad::permute(ad::reduce_sum(phi_k, {1}, /*keepdim=*/true), {0, 2, 1});  // [B, m, 1]
    Var normalizer = ad::bmm(phi_q, key_mass);                                            // [B, Lq, 1]
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t r = 0; r < lq; ++r) {
            const double z = normalizer->value[b * lq + r];
            if (!(z > 0.0) || !std::isfinite(z)) {
                throw NumericError("fast_attention: degenerate normalizer at batch " + std::to_string(b) + " row " +
                                   std::to_string(r));
            }
        }
    }
    Var mixed = ad::bmm(phi_q, ad::bmm_tn(phi_k, v));  // [B, Lq, dv]
    return ad::div_lastdim(mixed, normalizer);
}

Tensor fast_attention(const Tensor& q, const Tensor& k, const Tensor& v, int64_t m, uint64_t seed) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0)) {
        throw ValidationError("fast_attention: incompatible shapes " + shape_to_string(q.shape()) + ", " +
                              shape_to_string(k.shape()) + ", " + shape_to_string(v.shape()));
    }
    const Tensor features = draw_random_features(q.dim(1), m, seed);
    Var out = fast_attention_batched(ad::constant(q.reshaped({1, q.dim(0), q.dim(1)})),
                                     ad::constant(k.reshaped({1, k.dim(0), k.dim(1)})),
                                     ad::constant(v.reshaped({1, v.dim(0), v.dim(1)})), features);
    return out->value.reshaped({q.dim(0), v.dim(1)});
}

void init_cross_attention_params(ParamStore& store, const std::string& prefix, int64_t channels, int64_t proj_dim,
                                 int64_t feature_count, AttentionKind kind, Rng& rng) {
    if (proj_dim < 1) throw ValidationError("cross attention: projection width must be >= 1");
    const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
    const double out_bound = 1.0 / std::sqrt(static_cast<double>(proj_dim));
    for (const char* side : {"body.", "hand."}) {
        const std::string base = prefix + side;
        store.declare(base + "Wq", Tensor::uniform({channels, proj_dim}, rng, -bound, bound));
        store.declare(base + "Wk", Tensor::uniform({channels, proj_dim}, rng, -bound, bound));
        store.declare(base + "Wv", Tensor::uniform({channels, proj_dim}, rng, -bound, bound));
        store.declare(base + "Wo", Tensor::uniform({proj_dim, channels}, rng, -out_bound, out_bound));
        if (kind == AttentionKind::fast) {
            if (feature_count < 1) throw ValidationError("cross attention: feature count must be >= 1");
            store.declare(base + "features", draw_random_features(proj_dim, feature_count, rng.next_u64()),
                          /*trainable=*/false);
        }
    }
}

namespace {

// Projects [N, L, C] tokens with a [C, D] matrix.
Var project_tokens(const Var& tokens, const Var& w) {
    const Shape& s = tokens->value.shape();
    const int64_t batch = s[0], len = s[1], c = s[2];
    Var flat = ad::reshape(tokens, {batch * len, c});
    Var projected = ad::matmul(flat, w);
    return ad::reshape(projected, {batch, len, w->value.dim(1)});
}

// One direction: queries from `queries`, keys/values from `context`.
Var attend_direction(GraphCtx& ctx, const std::string& base, const Var& queries, const Var& context,
                     AttentionKind kind) {
    Var q = project_tokens(queries, ctx.param(base + "Wq"));
    Var k = project_tokens(context, ctx.param(base + "Wk"));
    Var v = project_tokens(context, ctx.param(base + "Wv"));
    Var attended = kind == AttentionKind::fast
                       ? fast_attention_batched(q, k, v, ctx.store->at(base + "features").value)
                       : softmax_attention_batched(q, k, v);
    return project_tokens(attended, ctx.param(base + "Wo"));
}

}  // namespace

CrossAttended cross_attend(GraphCtx& ctx, const std::string& prefix, const ad::Var& body_tokens,
                           const ad::Var& hand_tokens, AttentionKind kind) {
    if (body_tokens->value.shape().back() != hand_tokens->value.shape().back()) {
        throw ValidationError("cross_attend: streams must share the channel width");
    }
    CrossAttended out;
    out.body = attend_direction(ctx, prefix + "body.", body_tokens, hand_tokens, kind);
    out.hand = attend_direction(ctx, prefix + "hand.", hand_tokens, body_tokens, kind);
    return out;
}

AxisViews pooled_axis_views(const ad::Var& feature_map) {
    const Shape& s = feature_map->value.shape();
    if (s.size() != 5) {
        throw ValidationError("pooled_axis_views: expected [N,C,T,I,V], got " + shape_to_string(s));
    }
    AxisViews views;
    views.time = ad::permute(ad::reduce_mean(feature_map, {3, 4}, false), {0, 2, 1});      // [N, T, C]
    views.node = ad::permute(ad::reduce_mean(feature_map, {2, 3}, false), {0, 2, 1});      // [N, V, C]
    views.instance = ad::permute(ad::reduce_mean(feature_map, {2, 4}, false), {0, 2, 1});  // [N, I, C]
    return views;
}

void init_pam_params(ParamStore& store, const std::string& prefix, int64_t channels, int64_t proj_dim,
                     int64_t feature_count, Rng& rng) {
    for (const char* axis : {"T.", "V.", "I."}) {
        init_cross_attention_params(store, prefix + axis, channels, proj_dim, feature_count, AttentionKind::fast,
                                    rng);
    }
}

PamOutputs pam_forward(GraphCtx& ctx, const std::string& attn_prefix, const std::string& body_head,
                       const std::string& hand_head, const ad::Var& f_body, const ad::Var& f_hand) {
    if (f_body->value.shape()[1] != f_hand->value.shape()[1]) {
        throw ValidationError("pam_forward: streams must share the channel width");
    }
    AxisViews body_views = pooled_axis_views(f_body);
    AxisViews hand_views = pooled_axis_views(f_hand);

    std::vector<Var> body_pooled;
    std::vector<Var> hand_pooled;
    const std::pair<const char*, std::pair<Var, Var>> axes[] = {
        {"T.", {body_views.time, hand_views.time}},
        {"V.", {body_views.node, hand_views.node}},
        {"I.", {body_views.instance, hand_views.instance}},
    };
    for (const auto& [axis, views] : axes) {
        CrossAttended attended = cross_attend(ctx, attn_prefix + axis, views.first, views.second,
                                              AttentionKind::fast);
        body_pooled.push_back(ad::reduce_mean(attended.body, {1}, false));  // [N, C]
        hand_pooled.push_back(ad::reduce_mean(attended.hand, {1}, false));
    }

    PamOutputs out;
    out.body_logits = linear(ctx, body_head, ad::add_all(body_pooled));
    out.hand_logits = linear(ctx, hand_head, ad::add_all(hand_pooled));
    return out;
}

void init_linear_params(ParamStore& store, const std::string& prefix, int64_t in_dim, int64_t out_dim, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    store.declare(prefix + "W", Tensor::uniform({in_dim, out_dim}, rng, -bound, bound));
    store.declare(prefix + "b", Tensor::zeros({out_dim}));
}

Var linear(GraphCtx& ctx, const std::string& prefix, const ad::Var& x) {
    Var w = ctx.param(prefix + "W");
    Var b = ctx.param(prefix + "b");
    const Shape& s = x->value.shape();
    const int64_t c = s.back();
    if (c != w->value.dim(0)) {
        throw ValidationError("linear '" + prefix + "': input width " + std::to_string(c) + " does not match " +
                              shape_to_string(w->value.shape()));
    }
    if (s.size() == 2) return ad::add_rowvec(ad::matmul(x, w), b);
    int64_t rows = 1;
    for (size_t i = 0; i + 1 < s.size(); ++i) rows *= s[i];
    Shape out_shape(s.begin(), s.end() - 1);
    out_shape.push_back(w->value.dim(1));
    Var flat = ad::reshape(x, {rows, c});
    return ad::reshape(ad::add_rowvec(ad::matmul(flat, w), b), out_shape);
}

Var flatten_tokens(const ad::Var& feature_map) {
    const Shape& s = feature_map->value.shape();
    if (s.size() != 5) throw ValidationError("flatten_tokens: expected [N,C,T,I,V], got " + shape_to_string(s));
    Var moved = ad::permute(feature_map, {0, 2, 3, 4, 1});  // [N, T, I, V, C]
    return ad::reshape(moved, {s[0], s[2] * s[3] * s[4], s[1]});
}

}  // namespace bharnet
