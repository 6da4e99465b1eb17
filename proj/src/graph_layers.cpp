#include "bharnet/graph_layers.hpp"

#include <cmath>

#include "bharnet/parallel.hpp"

namespace bharnet {

using ad::Var;

namespace {

void check_feature_map(const Tensor& x, const char* op) {
    if (x.rank() != 5) {
        throw ValidationError(std::string(op) + ": expected a 5-axis feature map [N,C,T,I,V], got " +
                              shape_to_string(x.shape()));
    }
}

// out[r, :] = x[r, :] * A for one row r; A is V x V row-major.
inline void aggregate_row(const double* xrow, const double* adj, double* orow, int64_t v) {
    for (int64_t j = 0; j < v; ++j) orow[j] = 0.0;
    for (int64_t u = 0; u < v; ++u) {
        const double xv = xrow[u];
        if (xv == 0.0) continue;
        const double* arow = adj + u * v;
        for (int64_t j = 0; j < v; ++j) orow[j] += xv * arow[j];
    }
}

// out[r, u] += sum_v g[r, v] * A[u, v]  (transpose of aggregate_row).
inline void aggregate_row_transposed(const double* grow, const double* adj, double* orow, int64_t v) {
    for (int64_t u = 0; u < v; ++u) {
        const double* arow = adj + u * v;
        double acc = 0.0;
        for (int64_t j = 0; j < v; ++j) acc += grow[j] * arow[j];
        orow[u] += acc;
    }
}

void aggregate_slab(const double* x, const double* adj, double* out, int64_t rows, int64_t v) {
    parallel_for(rows, [&](int64_t r) { aggregate_row(x + r * v, adj, out + r * v, v); });
}

}  // namespace

Var spatial_graph_conv(const ad::Var& x, const AdjacencyStack& adjacency, const ad::Var& weights) {
    check_feature_map(x->value, "spatial_graph_conv");
    const Shape xs = x->value.shape();
    const Shape& ws = weights->value.shape();
    const int64_t n = xs[0], c_in = xs[1], t = xs[2], inst = xs[3], v = xs[4];
    if (ws.size() != 3 || ws[0] != adjacency.subset_count() || ws[1] != c_in) {
        throw ValidationError("spatial_graph_conv: weights " + shape_to_string(ws) + " do not match " +
                              std::to_string(adjacency.subset_count()) + " subsets and " + std::to_string(c_in) +
                              " input channels");
    }
    for (const Tensor& a : adjacency.subsets) {
        if (a.shape() != Shape{v, v}) {
            throw ValidationError("spatial_graph_conv: adjacency is " + shape_to_string(a.shape()) +
                                  " but feature map has V=" + std::to_string(v));
        }
    }
    const int64_t s_count = ws[0];
    const int64_t c_out = ws[2];
    const int64_t x_len = t * inst * v;        // per-channel slab
    const int64_t agg_rows = c_in * t * inst;  // aggregation view rows

    Tensor out({n, c_out, t, inst, v});
    {
        Tensor agg({agg_rows, v});
        for (int64_t i = 0; i < n; ++i) {
            const double* x_slab = x->value.data() + i * c_in * x_len;
            double* out_slab = out.data() + i * c_out * x_len;
            for (int64_t s = 0; s < s_count; ++s) {
                aggregate_slab(x_slab, adjacency.subsets[static_cast<size_t>(s)].data(), agg.data(), agg_rows, v);
                // out (C_out x X) (+)= W_s^T (C_out x C_in) * agg (C_in x X)
                ad::detail::mm_tn(weights->value.data() + s * c_in * c_out, agg.data(), out_slab, c_out, c_in, x_len,
                                  s > 0);
            }
        }
    }

    // The aggregation is recomputed in the backward pass instead of caching
    // S slabs per node.
    AdjacencyStack adj = adjacency;
    return ad::make_op(
        std::move(out), {x, weights},
        [adj = std::move(adj), n, c_in, c_out, t, inst, v, x_len, agg_rows, s_count](ad::Node& self) {
            Var& xp = self.parents[0];
            Var& wp = self.parents[1];
            const bool need_x = xp->requires_grad;
            const bool need_w = wp->requires_grad;
            double* dx = need_x ? ad::grad_buffer(*xp).data() : nullptr;
            double* dw = need_w ? ad::grad_buffer(*wp).data() : nullptr;
            Tensor agg({agg_rows, v});
            Tensor dagg({agg_rows, v});
            for (int64_t i = 0; i < n; ++i) {
                const double* g_slab = self.grad.data() + i * c_out * x_len;
                const double* x_slab = xp->value.data() + i * c_in * x_len;
                for (int64_t s = 0; s < s_count; ++s) {
                    const double* w_s = wp->value.data() + s * c_in * c_out;
                    const double* a_s = adj.subsets[static_cast<size_t>(s)].data();
                    // dAgg (C_in x X) = W_s (C_in x C_out) * G (C_out x X)
                    ad::detail::mm_nn(w_s, g_slab, dagg.data(), c_in, c_out, x_len, false);
                    if (need_w) {
                        aggregate_slab(x_slab, a_s, agg.data(), agg_rows, v);
                        // dW_s (C_in x C_out) += agg (C_in x X) * G^T (X x C_out)
                        ad::detail::mm_nt(agg.data(), g_slab, dw + s * c_in * c_out, c_in, x_len, c_out, true);
                    }
                    if (need_x) {
                        double* dx_slab = dx + i * c_in * x_len;
                        parallel_for(agg_rows, [&](int64_t r) {
                            aggregate_row_transposed(dagg.data() + r * v, a_s, dx_slab + r * v, v);
                        });
                    }
                }
            }
        });
}

Var temporal_conv(const ad::Var& x, const ad::Var& kernel, int stride) {
    check_feature_map(x->value, "temporal_conv");
    const Shape& xs = x->value.shape();
    const Shape& ks = kernel->value.shape();
    const int64_t n = xs[0], c = xs[1], t = xs[2], inst = xs[3], v = xs[4];
    if (ks.size() != 3 || ks[0] != c || ks[1] != c) {
        throw ValidationError("temporal_conv: kernel " + shape_to_string(ks) + " does not match " +
                              std::to_string(c) + " channels");
    }
    const int64_t kt = ks[2];
    if (kt % 2 == 0) throw ValidationError("temporal_conv: kernel width must be odd, got " + std::to_string(kt));
    if (stride != 1 && stride != 2) throw ValidationError("temporal_conv: stride must be 1 or 2");
    const int64_t pad = (kt - 1) / 2;
    const int64_t t_out = (t + stride - 1) / stride;
    const int64_t iv = inst * v;

    Tensor out({n, c, t_out, inst, v});
    {
        const double* xd = x->value.data();
        const double* kd = kernel->value.data();
        double* od = out.data();
        parallel_for(n * c, [&](int64_t nc) {
            const int64_t i = nc / c;
            const int64_t co = nc % c;
            double* o_base = od + (i * c + co) * t_out * iv;
            for (int64_t ci = 0; ci < c; ++ci) {
                const double* k_row = kd + (co * c + ci) * kt;
                const double* x_base = xd + (i * c + ci) * t * iv;
                for (int64_t k = 0; k < kt; ++k) {
                    const double kv = k_row[k];
                    if (kv == 0.0) continue;
                    for (int64_t to = 0; to < t_out; ++to) {
                        const int64_t ti = to * stride + k - pad;
                        if (ti < 0 || ti >= t) continue;
                        const double* src = x_base + ti * iv;
                        double* dst = o_base + to * iv;
                        for (int64_t j = 0; j < iv; ++j) dst[j] += kv * src[j];
                    }
                }
            }
        });
    }

    return ad::make_op(std::move(out), {x, kernel}, [n, c, t, t_out, inst, v, iv, kt, pad, stride](ad::Node& self) {
        Var& xp = self.parents[0];
        Var& kp = self.parents[1];
        const double* g = self.grad.data();
        if (xp->requires_grad) {
            double* dx = ad::grad_buffer(*xp).data();
            const double* kd = kp->value.data();
            parallel_for(n * c, [&](int64_t nc) {
                const int64_t i = nc / c;
                const int64_t ci = nc % c;
                double* dx_base = dx + (i * c + ci) * t * iv;
                for (int64_t co = 0; co < c; ++co) {
                    const double* k_row = kd + (co * c + ci) * kt;
                    const double* g_base = g + (i * c + co) * t_out * iv;
                    for (int64_t k = 0; k < kt; ++k) {
                        const double kv = k_row[k];
                        if (kv == 0.0) continue;
                        for (int64_t to = 0; to < t_out; ++to) {
                            const int64_t ti = to * stride + k - pad;
                            if (ti < 0 || ti >= t) continue;
                            const double* src = g_base + to * iv;
                            double* dst = dx_base + ti * iv;
                            for (int64_t j = 0; j < iv; ++j) dst[j] += kv * src[j];
                        }
                    }
                }
            });
        }
        if (kp->requires_grad) {
            double* dk = ad::grad_buffer(*kp).data();
            const double* xd = xp->value.data();
            parallel_for(c, [&](int64_t co) {
                for (int64_t ci = 0; ci < c; ++ci) {
                    double* dk_row = dk + (co * c + ci) * kt;
                    for (int64_t i = 0; i < n; ++i) {
                        const double* g_base = g + (i * c + co) * t_out * iv;
                        const double* x_base = xd + (i * c + ci) * t * iv;
                        for (int64_t k = 0; k < kt; ++k) {
                            double acc = 0.0;
                            for (int64_t to = 0; to < t_out; ++to) {
                                const int64_t ti = to * stride + k - pad;
                                if (ti < 0 || ti >= t) continue;
                                const double* grow = g_base + to * iv;
                                const double* xrow = x_base + ti * iv;
                                for (int64_t j = 0; j < iv; ++j) acc += grow[j] * xrow[j];
                            }
                            dk_row[k] += acc;
                        }
                    }
                }
            });
        }
    });
}

Var batch_norm(const ad::Var& x, const ad::Var& gamma, const ad::Var& beta, Tensor& running_mean,
               Tensor& running_var, bool training, double momentum, double eps) {
    check_feature_map(x->value, "batch_norm");
    const Shape& xs = x->value.shape();
    const int64_t n = xs[0], c = xs[1], t = xs[2], inst = xs[3], v = xs[4];
    if (gamma->value.shape() != Shape{c} || beta->value.shape() != Shape{c} ||
        running_mean.shape() != Shape{c} || running_var.shape() != Shape{c}) {
        throw ValidationError("batch_norm: scale/shift/statistics must be per-channel vectors of length " +
                              std::to_string(c));
    }
    const int64_t slab = t * inst * v;  // contiguous per (n, c)
    const int64_t count = n * slab;

    Tensor mean({c});
    Tensor var({c});
    if (training) {
        parallel_for(c, [&](int64_t ch) {
            double acc = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const double* src = x->value.data() + (i * c + ch) * slab;
                for (int64_t j = 0; j < slab; ++j) acc += src[j];
            }
            const double mu = acc / static_cast<double>(count);
            double sq = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const double* src = x->value.data() + (i * c + ch) * slab;
                for (int64_t j = 0; j < slab; ++j) {
                    const double d = src[j] - mu;
                    sq += d * d;
                }
            }
            mean[ch] = mu;
            var[ch] = sq / static_cast<double>(count);
        });
        for (int64_t ch = 0; ch < c; ++ch) {
            running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mean[ch];
            running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * var[ch];
        }
    } else {
        mean = running_mean;
        var = running_var;
    }

    Tensor inv_std({c});
    for (int64_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + eps);

    Tensor out(xs);
    {
        const double* xd = x->value.data();
        const double* gm = gamma->value.data();
        const double* bt = beta->value.data();
        double* od = out.data();
        parallel_for(n * c, [&](int64_t nc) {
            const int64_t ch = nc % c;
            const double mu = mean[ch];
            const double is = inv_std[ch];
            const double gain = gm[ch] * is;
            const double shift = bt[ch];
            const double* src = xd + nc * slab;
            double* dst = od + nc * slab;
            for (int64_t j = 0; j < slab; ++j) dst[j] = (src[j] - mu) * gain + shift;
        });
    }

    return ad::make_op(
        std::move(out), {x, gamma, beta},
        [mean = std::move(mean), inv_std = std::move(inv_std), training, n, c, slab, count](ad::Node& self) {
            Var& xp = self.parents[0];
            Var& gp = self.parents[1];
            Var& bp = self.parents[2];
            const double* g = self.grad.data();
            const double* xd = xp->value.data();
            const double* gm = gp->value.data();

            // Per-channel accumulators: sum g and sum g * xhat.
            Tensor sum_g({c});
            Tensor sum_gx({c});
            parallel_for(c, [&](int64_t ch) {
                const double mu = mean[ch];
                const double is = inv_std[ch];
                double sg = 0.0, sgx = 0.0;
                for (int64_t i = 0; i < n; ++i) {
                    const double* grow = g + (i * c + ch) * slab;
                    const double* xrow = xd + (i * c + ch) * slab;
                    for (int64_t j = 0; j < slab; ++j) {
                        sg += grow[j];
                        sgx += grow[j] * (xrow[j] - mu) * is;
                    }
                }
                sum_g[ch] = sg;
                sum_gx[ch] = sgx;
            });

            if (bp->requires_grad) {
                double* db = ad::grad_buffer(*bp).data();
                for (int64_t ch = 0; ch < c; ++ch) db[ch] += sum_g[ch];
            }
            if (gp->requires_grad) {
                double* dg = ad::grad_buffer(*gp).data();
                for (int64_t ch = 0; ch < c; ++ch) dg[ch] += sum_gx[ch];
            }
            if (xp->requires_grad) {
                double* dx = ad::grad_buffer(*xp).data();
                const double inv_count = 1.0 / static_cast<double>(count);
                parallel_for(n * c, [&](int64_t nc) {
                    const int64_t ch = nc % c;
                    const double mu = mean[ch];
                    const double is = inv_std[ch];
                    const double gain = gm[ch] * is;
                    const double* grow = g + nc * slab;
                    const double* xrow = xd + nc * slab;
                    double* drow = dx + nc * slab;
                    if (training) {
                        const double mg = sum_g[ch] * inv_count;
                        const double mgx = sum_gx[ch] * inv_count;
                        for (int64_t j = 0; j < slab; ++j) {
                            const double xhat = (xrow[j] - mu) * is;
                            drow[j] += gain * (grow[j] - mg - xhat * mgx);
                        }
                    } else {
                        for (int64_t j = 0; j < slab; ++j) drow[j] += gain * grow[j];
                    }
                });
            }
        });
}

int64_t BackboneConfig::out_frames(int64_t t_in) const {
    int64_t t = t_in;
    for (int s : strides) t = (t + s - 1) / s;
    return t;
}

void BackboneConfig::validate() const {
    if (channels.size() != strides.size() + 1) {
        throw ValidationError("backbone config: need one channel width per block plus the input width");
    }
    if (channels.empty() || strides.empty()) throw ValidationError("backbone config: empty block chain");
    for (int ch : channels) {
        if (ch < 1) throw ValidationError("backbone config: channel widths must be positive");
    }
    for (int s : strides) {
        if (s != 1 && s != 2) throw ValidationError("backbone config: strides must be 1 or 2");
    }
    if (temporal_kernel < 1 || temporal_kernel % 2 == 0) {
        throw ValidationError("backbone config: temporal kernel must be odd and positive");
    }
}

void init_backbone_params(ParamStore& store, const std::string& prefix, const BackboneConfig& config, Rng& rng) {
    config.validate();
    const int subsets = config.partition == Partition::uniform ? 1 : 3;
    for (int b = 0; b < config.blocks(); ++b) {
        const std::string block = prefix + "block" + std::to_string(b + 1) + ".";
        const int64_t c_in = config.channels[static_cast<size_t>(b)];
        const int64_t c_out = config.channels[static_cast<size_t>(b + 1)];
        const double spatial_bound = 1.0 / std::sqrt(static_cast<double>(subsets * c_in));
        store.declare(block + "spatial.W", Tensor::uniform({subsets, c_in, c_out}, rng, -spatial_bound, spatial_bound));
        store.declare(block + "bn.gamma", Tensor::full({c_out}, 1.0));
        store.declare(block + "bn.beta", Tensor::zeros({c_out}));
        store.declare(block + "bn.running_mean", Tensor::zeros({c_out}), /*trainable=*/false);
        store.declare(block + "bn.running_var", Tensor::full({c_out}, 1.0), /*trainable=*/false);
        const double temporal_bound = 1.0 / std::sqrt(static_cast<double>(c_out * config.temporal_kernel));
        store.declare(block + "temporal.W",
                      Tensor::uniform({c_out, c_out, config.temporal_kernel}, rng, -temporal_bound, temporal_bound));
    }
}

Var backbone_forward(GraphCtx& ctx, const std::string& prefix, const BackboneConfig& config,
                     const AdjacencyStack& adjacency, const ad::Var& x) {
    config.validate();
    Var h = x;
    for (int b = 0; b < config.blocks(); ++b) {
        const std::string block = prefix + "block" + std::to_string(b + 1) + ".";
        h = spatial_graph_conv(h, adjacency, ctx.param(block + "spatial.W"));
        h = batch_norm(h, ctx.param(block + "bn.gamma"), ctx.param(block + "bn.beta"),
                       ctx.store->at(block + "bn.running_mean").value, ctx.store->at(block + "bn.running_var").value,
                       ctx.training);
        h = ad::relu(h);
        h = temporal_conv(h, ctx.param(block + "temporal.W"), config.strides[static_cast<size_t>(b)]);
    }
    return h;
}

}  // namespace bharnet
