#pragma once

#include <string>

#include "bharnet/autodiff.hpp"
#include "bharnet/params.hpp"
#include "bharnet/rng.hpp"

namespace bharnet {

// Exact softmax attention, out = softmax(Q K^T / sqrt(d)) V. Plain-loop
// implementation; serves as the independent oracle for the fast path and for
// the graph-built attention used inside models.
Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// Positive random features for the softmax kernel: rows of `features` are
// the d-dimensional Gaussian draws w_i, laid out [d x m].
Tensor draw_random_features(int64_t d, int64_t m, uint64_t seed);

// Linear-complexity attention with positive random features:
//   phi(x) = m^(-1/2) exp(-|x'|^2/2) [exp(w_i^T x')],  x' = x d^(-1/4)
//   out = diag(phi(Q) phi(K)^T 1)^(-1) phi(Q) (phi(K)^T V)
Tensor fast_attention(const Tensor& q, const Tensor& k, const Tensor& v, int64_t m, uint64_t seed);

// Batched graph-building versions; q [B, Lq, d], k [B, Lk, d], v [B, Lk, dv].
ad::Var softmax_attention_batched(const ad::Var& q, const ad::Var& k, const ad::Var& v);
ad::Var fast_attention_batched(const ad::Var& q, const ad::Var& k, const ad::Var& v, const Tensor& features);

enum class AttentionKind { exact, fast };

// One cross-attention module: a projection set per direction. Declares
// "<prefix>body.Wq|Wk|Wv|Wo" and "<prefix>hand.Wq|Wk|Wv|Wo" plus frozen
// "<prefix>body.features" / "<prefix>hand.features" buffers when fast.
void init_cross_attention_params(ParamStore& store, const std::string& prefix, int64_t channels, int64_t proj_dim,
                                 int64_t feature_count, AttentionKind kind, Rng& rng);

struct CrossAttended {
    ad::Var body;  // [N, L_body, C]
    ad::Var hand;  // [N, L_hand, C]
};

// Bidirectional cross-attention: the body output attends hand keys/values
// with body queries, and symmetrically for hand. No residual connections.
CrossAttended cross_attend(GraphCtx& ctx, const std::string& prefix, const ad::Var& body_tokens,
                           const ad::Var& hand_tokens, AttentionKind kind);

struct AxisViews {
    ad::Var time;      // [N, T, C]
    ad::Var node;      // [N, V, C]
    ad::Var instance;  // [N, I, C]
};

// For each non-channel axis, averages the feature map over the other two
// non-channel axes, producing per-axis token sequences.
AxisViews pooled_axis_views(const ad::Var& feature_map);

// Declares the per-axis, per-direction projection sets of the pooling
// attention module under "<prefix>T.", "<prefix>V.", "<prefix>I.".
void init_pam_params(ParamStore& store, const std::string& prefix, int64_t channels, int64_t proj_dim,
                     int64_t feature_count, Rng& rng);

struct PamOutputs {
    ad::Var body_logits;
    ad::Var hand_logits;
};

// Pooling attention module: per axis, cross-attend the pooled views, average
// each attended view over its remaining axis, sum the three pooled vectors
// per stream, and classify with one fully-connected head per stream.
PamOutputs pam_forward(GraphCtx& ctx, const std::string& attn_prefix, const std::string& body_head,
                       const std::string& hand_head, const ad::Var& f_body, const ad::Var& f_hand);

// Fully connected layer helpers ("<prefix>W" [C_in, C_out], "<prefix>b").
void init_linear_params(ParamStore& store, const std::string& prefix, int64_t in_dim, int64_t out_dim, Rng& rng);
ad::Var linear(GraphCtx& ctx, const std::string& prefix, const ad::Var& x);  // x [..., C_in]

// Flattens a feature map [N, C, T, I, V] into token sequences [N, T*I*V, C].
ad::Var flatten_tokens(const ad::Var& feature_map);

}  // namespace bharnet
