#include "bharnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "bharnet/parallel.hpp"

namespace bharnet::ad {

namespace {

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->parents = std::move(parents);
    for (const auto& p : node->parents) {
        if (p->requires_grad) {
            node->requires_grad = true;
            break;
        }
    }
    if (node->requires_grad) node->backprop = std::move(backprop);
    return node;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value)) {
        throw ValidationError(std::string(op) + ": shape mismatch " + shape_to_string(a->value.shape()) + " vs " +
                              shape_to_string(b->value.shape()));
    }
}

// Walks the input tensor linearly while tracking a mapped output offset.
// out_stride[axis] is the offset contribution of one step along that input
// axis (0 for reduced axes). fn(in_index, out_index).
template <class F>
void odometer_map(const Shape& in_shape, const std::vector<int64_t>& out_stride, F&& fn) {
    const int rank = static_cast<int>(in_shape.size());
    std::vector<int64_t> coord(static_cast<size_t>(rank), 0);
    const int64_t n = shape_numel(in_shape);
    int64_t out_idx = 0;
    for (int64_t i = 0; i < n; ++i) {
        fn(i, out_idx);
        for (int axis = rank - 1; axis >= 0; --axis) {
            ++coord[static_cast<size_t>(axis)];
            out_idx += out_stride[static_cast<size_t>(axis)];
            if (coord[static_cast<size_t>(axis)] < in_shape[static_cast<size_t>(axis)]) break;
            coord[static_cast<size_t>(axis)] = 0;
            out_idx -= out_stride[static_cast<size_t>(axis)] * in_shape[static_cast<size_t>(axis)];
        }
    }
}

std::vector<int64_t> row_major_strides(const Shape& shape) {
    std::vector<int64_t> strides(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
        strides[static_cast<size_t>(i)] = strides[static_cast<size_t>(i + 1)] * shape[static_cast<size_t>(i + 1)];
    }
    return strides;
}

struct ReducePlan {
    Shape out_shape;
    std::vector<int64_t> out_stride;  // per input axis, 0 where reduced
    int64_t count = 1;                // number of input elements per output element
};

ReducePlan make_reduce_plan(const Shape& in_shape, std::vector<int> axes, bool keepdim) {
    const int rank = static_cast<int>(in_shape.size());
    std::vector<bool> reduced(static_cast<size_t>(rank), false);
    for (int axis : axes) {
        if (axis < 0 || axis >= rank) {
            throw ValidationError("reduce: axis " + std::to_string(axis) + " out of range for shape " +
                                  shape_to_string(in_shape));
        }
        reduced[static_cast<size_t>(axis)] = true;
    }
    ReducePlan plan;
    for (int i = 0; i < rank; ++i) {
        if (reduced[static_cast<size_t>(i)]) {
            plan.count *= in_shape[static_cast<size_t>(i)];
            if (keepdim) plan.out_shape.push_back(1);
        } else {
            plan.out_shape.push_back(in_shape[static_cast<size_t>(i)]);
        }
    }
    const auto out_strides = row_major_strides(plan.out_shape);
    plan.out_stride.assign(static_cast<size_t>(rank), 0);
    size_t out_axis = 0;
    for (int i = 0; i < rank; ++i) {
        if (reduced[static_cast<size_t>(i)]) {
            if (keepdim) ++out_axis;  // stride stays 0: that axis has extent 1
            continue;
        }
        plan.out_stride[static_cast<size_t>(i)] = out_strides[out_axis];
        ++out_axis;
    }
    return plan;
}

Var reduce_impl(const Var& a, std::vector<int> axes, bool keepdim, bool mean) {
    ReducePlan plan = make_reduce_plan(a->value.shape(), std::move(axes), keepdim);
    const double inv = mean ? 1.0 / static_cast<double>(plan.count) : 1.0;
    Tensor out(plan.out_shape);
    {
        const double* src = a->value.data();
        double* dst = out.data();
        odometer_map(a->value.shape(), plan.out_stride, [&](int64_t i, int64_t o) { dst[o] += src[i]; });
        if (mean) {
            for (int64_t i = 0; i < out.numel(); ++i) dst[i] *= inv;
        }
    }
    Shape in_shape = a->value.shape();
    return make_node(std::move(out), {a},
                     [plan = std::move(plan), in_shape = std::move(in_shape), inv](Node& self) {
                         Var& p = self.parents[0];
                         if (!p->requires_grad) return;
                         Tensor& gin = grad_buffer(*p);
                         const double* gout = self.grad.data();
                         double* dst = gin.data();
                         odometer_map(in_shape, plan.out_stride,
                                      [&](int64_t i, int64_t o) { dst[i] += inv * gout[o]; });
                     });
}

void check_lastdim_pair(const Var& a, const Var& z, const char* op) {
    const Shape& sa = a->value.shape();
    const Shape& sz = z->value.shape();
    bool ok = sa.size() == sz.size() && !sa.empty() && sz.back() == 1;
    if (ok) {
        for (size_t i = 0; i + 1 < sa.size(); ++i) ok = ok && sa[i] == sz[i];
    }
    if (!ok) {
        throw ValidationError(std::string(op) + ": expected trailing-1 companion of " + shape_to_string(sa) +
                              ", got " + shape_to_string(sz));
    }
}

}  // namespace

Var constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = false;
    return node;
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
    return make_node(std::move(value), std::move(parents), std::move(backprop));
}

Var leaf(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return node;
}

Tensor& grad_buffer(Node& node) {
    if (node.grad.numel() != node.value.numel()) node.grad = Tensor::zeros(node.value.shape());
    return node.grad;
}

void accumulate_grad(Node& node, const Tensor& delta) {
    grad_buffer(node).add_scaled(delta, 1.0);
}

void backward(const Var& root) {
    if (root->value.numel() != 1) {
        throw ValidationError("backward: root must be scalar, got shape " + shape_to_string(root->value.shape()));
    }
    if (!root->requires_grad) return;

    // Reverse topological order: every consumer is processed before its
    // producers, so each node's grad is complete when its backprop runs.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next].get();
            ++next;
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    grad_buffer(*root).fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backprop) node->backprop(*node);
    }
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    out.add_scaled(b->value, 1.0);
    return make_node(std::move(out), {a, b}, [](Node& self) {
        for (auto& p : self.parents) {
            if (p->requires_grad) accumulate_grad(*p, self.grad);
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    out.add_scaled(b->value, -1.0);
    return make_node(std::move(out), {a, b}, [](Node& self) {
        if (self.parents[0]->requires_grad) accumulate_grad(*self.parents[0], self.grad);
        if (self.parents[1]->requires_grad) grad_buffer(*self.parents[1]).add_scaled(self.grad, -1.0);
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a->value.shape());
    const int64_t n = out.numel();
    const double* pa = a->value.data();
    const double* pb = b->value.data();
    double* po = out.data();
    parallel_map(n, [&](int64_t i) { po[i] = pa[i] * pb[i]; });
    return make_node(std::move(out), {a, b}, [](Node& self) {
        const int64_t n = self.value.numel();
        const double* g = self.grad.data();
        const double* pa = self.parents[0]->value.data();
        const double* pb = self.parents[1]->value.data();
        if (self.parents[0]->requires_grad) {
            double* da = grad_buffer(*self.parents[0]).data();
            parallel_map(n, [&](int64_t i) { da[i] += g[i] * pb[i]; });
        }
        if (self.parents[1]->requires_grad) {
            double* db = grad_buffer(*self.parents[1]).data();
            parallel_map(n, [&](int64_t i) { db[i] += g[i] * pa[i]; });
        }
    });
}

Var scale(const Var& a, double factor) {
    Tensor out = a->value;
    double* po = out.data();
    parallel_map(out.numel(), [&](int64_t i) { po[i] *= factor; });
    return make_node(std::move(out), {a}, [factor](Node& self) {
        if (self.parents[0]->requires_grad) grad_buffer(*self.parents[0]).add_scaled(self.grad, factor);
    });
}

Var add_all(const std::vector<Var>& terms) {
    if (terms.empty()) throw ValidationError("add_all: empty term list");
    Var acc = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return acc;
}

Var exp(const Var& a) {
    Tensor out(a->value.shape());
    const double* pa = a->value.data();
    double* po = out.data();
    parallel_map(out.numel(), [&](int64_t i) { po[i] = std::exp(pa[i]); });
    return make_node(std::move(out), {a}, [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const int64_t n = self.value.numel();
        const double* g = self.grad.data();
        const double* v = self.value.data();
        double* da = grad_buffer(*self.parents[0]).data();
        parallel_map(n, [&](int64_t i) { da[i] += g[i] * v[i]; });
    });
}

Var relu(const Var& a) {
    Tensor out(a->value.shape());
    const double* pa = a->value.data();
    double* po = out.data();
    parallel_map(out.numel(), [&](int64_t i) { po[i] = pa[i] > 0.0 ? pa[i] : 0.0; });
    return make_node(std::move(out), {a}, [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const int64_t n = self.value.numel();
        const double* g = self.grad.data();
        const double* x = self.parents[0]->value.data();
        double* da = grad_buffer(*self.parents[0]).data();
        parallel_map(n, [&](int64_t i) { da[i] += x[i] > 0.0 ? g[i] : 0.0; });
    });
}

// --------------------------------------------------------------------- shape

Var reshape(const Var& a, Shape new_shape) {
    Tensor out = a->value.reshaped(std::move(new_shape));
    Shape old_shape = a->value.shape();
    return make_node(std::move(out), {a}, [old_shape = std::move(old_shape)](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        grad_buffer(*self.parents[0]).add_scaled(self.grad.reshaped(old_shape), 1.0);
    });
}

Var permute(const Var& a, const std::vector<int>& perm) {
    const Shape& in_shape = a->value.shape();
    const int rank = static_cast<int>(in_shape.size());
    if (static_cast<int>(perm.size()) != rank) {
        throw ValidationError("permute: permutation size does not match tensor rank");
    }
    std::vector<bool> seen(static_cast<size_t>(rank), false);
    Shape out_shape(static_cast<size_t>(rank));
    for (int j = 0; j < rank; ++j) {
        const int axis = perm[static_cast<size_t>(j)];
        if (axis < 0 || axis >= rank || seen[static_cast<size_t>(axis)]) {
            throw ValidationError("permute: invalid permutation");
        }
        seen[static_cast<size_t>(axis)] = true;
        out_shape[static_cast<size_t>(j)] = in_shape[static_cast<size_t>(axis)];
    }
    const auto out_strides = row_major_strides(out_shape);
    // Stride contribution in the output for one step along each input axis.
    std::vector<int64_t> out_stride(static_cast<size_t>(rank), 0);
    for (int j = 0; j < rank; ++j) out_stride[static_cast<size_t>(perm[static_cast<size_t>(j)])] = out_strides[static_cast<size_t>(j)];

    Tensor out(out_shape);
    {
        const double* src = a->value.data();
        double* dst = out.data();
        odometer_map(in_shape, out_stride, [&](int64_t i, int64_t o) { dst[o] = src[i]; });
    }
    Shape in_copy = in_shape;
    return make_node(std::move(out), {a}, [in_copy = std::move(in_copy), out_stride = std::move(out_stride)](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        double* gin = grad_buffer(*self.parents[0]).data();
        const double* gout = self.grad.data();
        odometer_map(in_copy, out_stride, [&](int64_t i, int64_t o) { gin[i] += gout[o]; });
    });
}

// ----------------------------------------------------------- matrix products

namespace detail {

void mm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    parallel_for(m, [&](int64_t i) {
        double* crow = c + i * n;
        if (!accumulate) {
            for (int64_t j = 0; j < n; ++j) crow[j] = 0.0;
        }
        const double* arow = a + i * k;
        for (int64_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = b + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    });
}

void mm_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    parallel_for(m, [&](int64_t i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    });
}

void mm_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    // a is (k x m); c = a^T b.
    parallel_for(m, [&](int64_t i) {
        double* crow = c + i * n;
        if (!accumulate) {
            for (int64_t j = 0; j < n; ++j) crow[j] = 0.0;
        }
        for (int64_t kk = 0; kk < k; ++kk) {
            const double av = a[kk * m + i];
            const double* brow = b + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    });
}

}  // namespace detail

Var matmul(const Var& a, const Var& b) {
    const Shape& sa = a->value.shape();
    const Shape& sb = b->value.shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
        throw ValidationError("matmul: incompatible shapes " + shape_to_string(sa) + " x " + shape_to_string(sb));
    }
    const int64_t m = sa[0], k = sa[1], n = sb[1];
    Tensor out({m, n});
    detail::mm_nn(a->value.data(), b->value.data(), out.data(), m, k, n, false);
    return make_node(std::move(out), {a, b}, [m, k, n](Node& self) {
        const double* g = self.grad.data();
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            detail::mm_nt(g, bv.data(), grad_buffer(*self.parents[0]).data(), m, n, k, true);
        }
        if (self.parents[1]->requires_grad) {
            detail::mm_tn(av.data(), g, grad_buffer(*self.parents[1]).data(), k, m, n, true);
        }
    });
}

namespace {

enum class BmmKind { NN, NT, TN };

Var bmm_impl(const Var& a, const Var& b, BmmKind kind) {
    const Shape& sa = a->value.shape();
    const Shape& sb = b->value.shape();
    if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0]) {
        throw ValidationError("bmm: expected 3-d operands with equal batch, got " + shape_to_string(sa) + " x " +
                              shape_to_string(sb));
    }
    const int64_t batch = sa[0];
    int64_t m = 0, k = 0, n = 0;
    bool ok = true;
    switch (kind) {
        case BmmKind::NN: m = sa[1]; k = sa[2]; n = sb[2]; ok = sb[1] == k; break;
        case BmmKind::NT: m = sa[1]; k = sa[2]; n = sb[1]; ok = sb[2] == k; break;
        case BmmKind::TN: m = sa[2]; k = sa[1]; n = sb[2]; ok = sb[1] == k; break;
    }
    if (!ok) {
        throw ValidationError("bmm: incompatible shapes " + shape_to_string(sa) + " x " + shape_to_string(sb));
    }
    Tensor out({batch, m, n});
    const int64_t a_sz = sa[1] * sa[2], b_sz = sb[1] * sb[2], o_sz = m * n;
    for (int64_t i = 0; i < batch; ++i) {
        const double* pa = a->value.data() + i * a_sz;
        const double* pb = b->value.data() + i * b_sz;
        double* po = out.data() + i * o_sz;
        switch (kind) {
            case BmmKind::NN: detail::mm_nn(pa, pb, po, m, k, n, false); break;
            case BmmKind::NT: detail::mm_nt(pa, pb, po, m, k, n, false); break;
            case BmmKind::TN: detail::mm_tn(pa, pb, po, m, k, n, false); break;
        }
    }
    return make_node(std::move(out), {a, b}, [batch, m, k, n, a_sz, b_sz, o_sz, kind](Node& self) {
        const bool need_a = self.parents[0]->requires_grad;
        const bool need_b = self.parents[1]->requires_grad;
        double* da = need_a ? grad_buffer(*self.parents[0]).data() : nullptr;
        double* db = need_b ? grad_buffer(*self.parents[1]).data() : nullptr;
        for (int64_t i = 0; i < batch; ++i) {
            const double* g = self.grad.data() + i * o_sz;
            const double* pa = self.parents[0]->value.data() + i * a_sz;
            const double* pb = self.parents[1]->value.data() + i * b_sz;
            switch (kind) {
                case BmmKind::NN:
                    if (need_a) detail::mm_nt(g, pb, da + i * a_sz, m, n, k, true);
                    if (need_b) detail::mm_tn(pa, g, db + i * b_sz, k, m, n, true);
                    break;
                case BmmKind::NT:
                    // c = a b^T: da += g b; db += g^T a
                    if (need_a) detail::mm_nn(g, pb, da + i * a_sz, m, n, k, true);
                    if (need_b) detail::mm_tn(g, pa, db + i * b_sz, n, m, k, true);
                    break;
                case BmmKind::TN:
                    // c = a^T b (a is k x m): da += b g^T; db += a g
                    if (need_a) detail::mm_nt(pb, g, da + i * a_sz, k, n, m, true);
                    if (need_b) detail::mm_nn(pa, g, db + i * b_sz, k, m, n, true);
                    break;
            }
        }
    });
}

}  // namespace

Var bmm(const Var& a, const Var& b) { return bmm_impl(a, b, BmmKind::NN); }
Var bmm_nt(const Var& a, const Var& b) { return bmm_impl(a, b, BmmKind::NT); }
Var bmm_tn(const Var& a, const Var& b) { return bmm_impl(a, b, BmmKind::TN); }

// ------------------------------------------------- reductions and broadcasts

Var reduce_sum(const Var& a, std::vector<int> axes, bool keepdim) {
    return reduce_impl(a, std::move(axes), keepdim, false);
}

Var reduce_mean(const Var& a, std::vector<int> axes, bool keepdim) {
    return reduce_impl(a, std::move(axes), keepdim, true);
}

Var sub_lastdim(const Var& a, const Var& z) {
    check_lastdim_pair(a, z, "sub_lastdim");
    const int64_t cols = a->value.shape().back();
    const int64_t rows = a->value.numel() / cols;
    Tensor out(a->value.shape());
    const double* pa = a->value.data();
    const double* pz = z->value.data();
    double* po = out.data();
    parallel_for(rows, [&](int64_t r) {
        const double zv = pz[r];
        for (int64_t j = 0; j < cols; ++j) po[r * cols + j] = pa[r * cols + j] - zv;
    });
    return make_node(std::move(out), {a, z}, [rows, cols](Node& self) {
        const double* g = self.grad.data();
        if (self.parents[0]->requires_grad) accumulate_grad(*self.parents[0], self.grad);
        if (self.parents[1]->requires_grad) {
            double* dz = grad_buffer(*self.parents[1]).data();
            parallel_for(rows, [&](int64_t r) {
                double acc = 0.0;
                for (int64_t j = 0; j < cols; ++j) acc += g[r * cols + j];
                dz[r] -= acc;
            });
        }
    });
}

Var div_lastdim(const Var& a, const Var& z) {
    check_lastdim_pair(a, z, "div_lastdim");
    const int64_t cols = a->value.shape().back();
    const int64_t rows = a->value.numel() / cols;
    Tensor out(a->value.shape());
    const double* pa = a->value.data();
    const double* pz = z->value.data();
    double* po = out.data();
    parallel_for(rows, [&](int64_t r) {
        const double inv = 1.0 / pz[r];
        for (int64_t j = 0; j < cols; ++j) po[r * cols + j] = pa[r * cols + j] * inv;
    });
    return make_node(std::move(out), {a, z}, [rows, cols](Node& self) {
        const double* g = self.grad.data();
        const double* pz = self.parents[1]->value.data();
        const double* out_v = self.value.data();
        if (self.parents[0]->requires_grad) {
            double* da = grad_buffer(*self.parents[0]).data();
            parallel_for(rows, [&](int64_t r) {
                const double inv = 1.0 / pz[r];
                for (int64_t j = 0; j < cols; ++j) da[r * cols + j] += g[r * cols + j] * inv;
            });
        }
        if (self.parents[1]->requires_grad) {
            double* dz = grad_buffer(*self.parents[1]).data();
            parallel_for(rows, [&](int64_t r) {
                const double inv = 1.0 / pz[r];
                double acc = 0.0;
                for (int64_t j = 0; j < cols; ++j) acc += g[r * cols + j] * out_v[r * cols + j];
                dz[r] -= acc * inv;
            });
        }
    });
}

Var add_rowvec(const Var& a, const Var& b) {
    const Shape& sa = a->value.shape();
    const Shape& sb = b->value.shape();
    if (sa.empty() || sb.size() != 1 || sb[0] != sa.back()) {
        throw ValidationError("add_rowvec: bias shape " + shape_to_string(sb) + " does not match last dim of " +
                              shape_to_string(sa));
    }
    const int64_t cols = sa.back();
    const int64_t rows = a->value.numel() / cols;
    Tensor out = a->value;
    double* po = out.data();
    const double* pb = b->value.data();
    parallel_for(rows, [&](int64_t r) {
        for (int64_t j = 0; j < cols; ++j) po[r * cols + j] += pb[j];
    });
    return make_node(std::move(out), {a, b}, [rows, cols](Node& self) {
        if (self.parents[0]->requires_grad) accumulate_grad(*self.parents[0], self.grad);
        if (self.parents[1]->requires_grad) {
            const double* g = self.grad.data();
            double* db = grad_buffer(*self.parents[1]).data();
            for (int64_t r = 0; r < rows; ++r) {
                for (int64_t j = 0; j < cols; ++j) db[j] += g[r * cols + j];
            }
        }
    });
}

// ------------------------------------------------------------ classification

Var softmax_lastdim(const Var& a) {
    const Shape& sa = a->value.shape();
    if (sa.empty()) throw ValidationError("softmax_lastdim: scalar input");
    const int64_t cols = sa.back();
    const int64_t rows = a->value.numel() / cols;
    Tensor out(sa);
    const double* pa = a->value.data();
    double* po = out.data();
    parallel_for(rows, [&](int64_t r) {
        const double* x = pa + r * cols;
        double* s = po + r * cols;
        double mx = x[0];
        for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            s[j] = std::exp(x[j] - mx);
            sum += s[j];
        }
        const double inv = 1.0 / sum;
        for (int64_t j = 0; j < cols; ++j) s[j] *= inv;
    });
    return make_node(std::move(out), {a}, [rows, cols](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const double* g = self.grad.data();
        const double* s = self.value.data();
        double* da = grad_buffer(*self.parents[0]).data();
        parallel_for(rows, [&](int64_t r) {
            const double* gr = g + r * cols;
            const double* sr = s + r * cols;
            double dot = 0.0;
            for (int64_t j = 0; j < cols; ++j) dot += gr[j] * sr[j];
            for (int64_t j = 0; j < cols; ++j) da[r * cols + j] += sr[j] * (gr[j] - dot);
        });
    });
}

Var cross_entropy_mean(const Var& logits, const std::vector<int>& labels) {
    const Shape& s = logits->value.shape();
    if (s.size() != 2) throw ValidationError("cross_entropy: logits must be 2-d, got " + shape_to_string(s));
    const int64_t n = s[0], k = s[1];
    if (static_cast<int64_t>(labels.size()) != n) {
        throw ValidationError("cross_entropy: batch size " + std::to_string(n) + " vs " +
                              std::to_string(labels.size()) + " labels");
    }
    for (int64_t i = 0; i < n; ++i) {
        if (labels[static_cast<size_t>(i)] < 0 || labels[static_cast<size_t>(i)] >= k) {
            throw ValidationError("cross_entropy: label " + std::to_string(labels[static_cast<size_t>(i)]) +
                                  " out of range [0," + std::to_string(k) + ") at row " + std::to_string(i));
        }
    }
    // Stabilized log-softmax; keep the per-row softmax for the backward pass.
    Tensor probs({n, k});
    double loss = 0.0;
    const double* x = logits->value.data();
    double* p = probs.data();
    for (int64_t i = 0; i < n; ++i) {
        const double* row = x + i * k;
        double mx = row[0];
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            p[i * k + j] = std::exp(row[j] - mx);
            sum += p[i * k + j];
        }
        const double inv = 1.0 / sum;
        for (int64_t j = 0; j < k; ++j) p[i * k + j] *= inv;
        loss += std::log(sum) + mx - row[labels[static_cast<size_t>(i)]];
    }
    loss /= static_cast<double>(n);
    return make_node(Tensor::scalar(loss), {logits},
                     [probs = std::move(probs), labels, n, k](Node& self) {
                         if (!self.parents[0]->requires_grad) return;
                         const double g = self.grad[0] / static_cast<double>(n);
                         double* dl = grad_buffer(*self.parents[0]).data();
                         const double* p = probs.data();
                         for (int64_t i = 0; i < n; ++i) {
                             for (int64_t j = 0; j < k; ++j) dl[i * k + j] += g * p[i * k + j];
                             dl[i * k + labels[static_cast<size_t>(i)]] -= g;
                         }
                     });
}

}  // namespace bharnet::ad
