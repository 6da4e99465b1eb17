#include "bharnet/params.hpp"

#include <json.hpp>

namespace bharnet {

using json = nlohmann::ordered_json;

Tensor& ParamStore::declare(const std::string& name, Tensor init, bool trainable) {
    if (contains(name)) throw ValidationError("param '" + name + "' declared twice");
    Param p;
    p.grad = Tensor::zeros(init.shape());
    p.value = std::move(init);
    p.trainable = trainable;
    order_.push_back(name);
    auto [it, ok] = map_.emplace(name, std::move(p));
    (void)ok;
    return it->second.value;
}

Param& ParamStore::at(const std::string& name) {
    auto it = map_.find(name);
    if (it == map_.end()) throw ValidationError("unknown param '" + name + "'");
    return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw ValidationError("unknown param '" + name + "'");
    return it->second;
}

void ParamStore::zero_grads() {
    for (const auto& name : order_) map_[name].grad.fill(0.0);
}

int64_t ParamStore::trainable_scalars() const {
    int64_t n = 0;
    for (const auto& name : order_) {
        const Param& p = map_.at(name);
        if (p.trainable) n += p.value.numel();
    }
    return n;
}

int ParamStore::copy_matching_from(const ParamStore& other) {
    int copied = 0;
    for (const auto& name : order_) {
        if (!other.contains(name)) continue;
        const Param& src = other.at(name);
        Param& dst = map_[name];
        if (!src.value.same_shape(dst.value)) continue;
        dst.value = src.value;
        ++copied;
    }
    return copied;
}

std::string params_to_json(const ParamStore& store) {
    json doc = json::object();
    for (const auto& name : store.names()) {
        const Param& p = store.at(name);
        json entry;
        entry["shape"] = p.value.shape();
        entry["trainable"] = p.trainable;
        entry["data"] = p.value.vec();
        doc[name] = std::move(entry);
    }
    return doc.dump();
}

void params_from_json_into(const std::string& payload, ParamStore& store) {
    json doc;
    try {
        doc = json::parse(payload);
    } catch (const json::exception& e) {
        throw IoError(std::string("cannot parse checkpoint params: ") + e.what());
    }
    if (!doc.is_object()) throw ValidationError("checkpoint params: expected an object");
    for (const auto& name : store.names()) {
        if (!doc.contains(name)) throw ValidationError("checkpoint params: missing entry '" + name + "'");
        const json& entry = doc[name];
        Param& p = store.at(name);
        const Shape shape = entry.at("shape").get<Shape>();
        if (shape != p.value.shape()) {
            throw ValidationError("checkpoint params: shape mismatch for '" + name + "': expected " +
                                  shape_to_string(p.value.shape()) + ", got " + shape_to_string(shape));
        }
        std::vector<double> data = entry.at("data").get<std::vector<double>>();
        p.value = Tensor(shape, std::move(data));
    }
}

int params_warm_start_from_json(const std::string& payload, ParamStore& store) {
    json doc;
    try {
        doc = json::parse(payload);
    } catch (const json::exception& e) {
        throw IoError(std::string("cannot parse checkpoint params: ") + e.what());
    }
    if (!doc.is_object()) throw ValidationError("checkpoint params: expected an object");
    int copied = 0;
    for (const auto& name : store.names()) {
        if (!doc.contains(name)) continue;
        const json& entry = doc[name];
        Param& p = store.at(name);
        const Shape shape = entry.at("shape").get<Shape>();
        if (shape != p.value.shape()) continue;
        std::vector<double> data = entry.at("data").get<std::vector<double>>();
        p.value = Tensor(shape, std::move(data));
        ++copied;
    }
    return copied;
}

ad::Var GraphCtx::param(const std::string& name) {
    Param& p = store->at(name);
    ad::Var leaf = ad::leaf(p.value);
    leaves.emplace_back(leaf, &p);
    return leaf;
}

ad::Var GraphCtx::buffer_constant(const std::string& name) { return ad::constant(store->at(name).value); }

void GraphCtx::write_back_grads() {
    for (auto& [leaf, param] : leaves) {
        if (leaf->grad.numel() == param->grad.numel()) {
            param->grad.add_scaled(leaf->grad, 1.0);
        }
        // A leaf with no grad buffer received no gradient; contribution is zero.
    }
}

}  // namespace bharnet
