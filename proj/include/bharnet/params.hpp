#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bharnet/autodiff.hpp"
#include "bharnet/tensor.hpp"

namespace bharnet {

struct Param {
    Tensor value;
    Tensor grad;
    Tensor velocity;  // SGD momentum state
    bool trainable = true;
};

// Insertion-ordered parameter container. Non-trainable entries hold
// normalization running statistics and other buffers; they serialize with
// the checkpoint but are never touched by the optimizer.
class ParamStore {
public:
    Tensor& declare(const std::string& name, Tensor init, bool trainable = true);
    bool contains(const std::string& name) const { return map_.count(name) > 0; }
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }

    void zero_grads();
    int64_t trainable_scalars() const;

    // Copies values (and buffers) for every matching name+shape; returns the
    // number of entries copied. Used to warm-start joint training from
    // pre-trained expert checkpoints.
    int copy_matching_from(const ParamStore& other);

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Param> map_;
};

// Flat checkpoint payload: canonical parameter path -> shape + row-major
// values. The trainer wraps this with run metadata.
std::string params_to_json(const ParamStore& store);
void params_from_json_into(const std::string& payload, ParamStore& store);

// Lenient warm start: copies every payload entry whose name and shape match
// a declared parameter; everything else is ignored. Returns the number of
// entries copied.
int params_warm_start_from_json(const std::string& payload, ParamStore& store);

// Builds autodiff leaves from stored parameter values and accumulates the
// leaves' gradients back into the store after backward().
struct GraphCtx {
    ParamStore* store = nullptr;
    bool training = true;

    ad::Var param(const std::string& name);
    ad::Var buffer_constant(const std::string& name);
    void write_back_grads();

    std::vector<std::pair<ad::Var, Param*>> leaves;
};

}  // namespace bharnet
