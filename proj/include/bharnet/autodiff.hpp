#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "bharnet/tensor.hpp"

namespace bharnet::ad {

// Reverse-mode automatic differentiation over dense tensors. Values are
// computed eagerly when an op node is built; backward() walks the recorded
// DAG once in reverse topological order. Graphs are rebuilt per step, so
// nodes own their buffers and the whole graph is freed when the root Var
// goes out of scope.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

    const Tensor& v() const { return value; }
};

Var constant(Tensor value);
Var leaf(Tensor value);  // requires_grad = true

// Creates an op node with a custom backward closure; used by domain kernels
// (graph convolution, temporal convolution, normalization) that live outside
// this translation unit. The closure is dropped when no parent needs grads.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop);

// Accumulates `delta` into the node's grad buffer (allocating zeros first).
void accumulate_grad(Node& node, const Tensor& delta);
Tensor& grad_buffer(Node& node);

// Runs reverse-mode accumulation from a scalar root (seed gradient 1).
void backward(const Var& root);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_all(const std::vector<Var>& terms);
Var exp(const Var& a);
Var relu(const Var& a);  // subgradient 0 at the kink

// ---- shape ----
Var reshape(const Var& a, Shape new_shape);
Var permute(const Var& a, const std::vector<int>& perm);

// ---- matrix products ----
Var matmul(const Var& a, const Var& b);  // [M,K]x[K,N]
Var bmm(const Var& a, const Var& b);     // [B,M,K]x[B,K,N]
Var bmm_nt(const Var& a, const Var& b);  // [B,M,K]x[B,N,K]^T -> [B,M,N]
Var bmm_tn(const Var& a, const Var& b);  // [B,K,M]^T x [B,K,N] -> [B,M,N]

// ---- reductions and broadcasts ----
Var reduce_sum(const Var& a, std::vector<int> axes, bool keepdim);
Var reduce_mean(const Var& a, std::vector<int> axes, bool keepdim);
Var sub_lastdim(const Var& a, const Var& z);  // z: a.shape with last dim 1
Var div_lastdim(const Var& a, const Var& z);
Var add_rowvec(const Var& a, const Var& b);  // b: [last dim of a]

// ---- classification ----
Var softmax_lastdim(const Var& a);
Var cross_entropy_mean(const Var& logits, const std::vector<int>& labels);

// ---- raw-kernel helpers shared with non-autodiff code paths ----
namespace detail {
// C (MxN) = or += A (MxK) * B (KxN), row-major.
void mm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
// C (MxN) = or += A (MxK) * B(NxK)^T.
void mm_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
// C (MxN) = or += A (KxM)^T * B (KxN).
void mm_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool accumulate);
}  // namespace detail

}  // namespace bharnet::ad
