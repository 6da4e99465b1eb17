#include "bharnet/tensor.hpp"

#include <cmath>
#include <sstream>

namespace bharnet {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    for (int64_t d : shape_) {
        if (d < 0) throw ValidationError("tensor dimension must be nonnegative, got shape " + shape_to_string(shape_));
    }
    data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_)) {
        throw ValidationError("tensor data size " + std::to_string(data_.size()) +
                              " does not match shape " + shape_to_string(shape_));
    }
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::scalar(double value) {
    Tensor t{Shape{}};
    t.data_.assign(1, value);
    return t;
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = rng.uniform(lo, hi);
    return t;
}

Tensor Tensor::normal(Shape shape, Rng& rng, double mean, double sigma) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = rng.normal(mean, sigma);
    return t;
}

int64_t Tensor::dim(int axis) const {
    if (axis < 0 || axis >= rank()) {
        throw ValidationError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape_));
    }
    return shape_[static_cast<size_t>(axis)];
}

int64_t Tensor::offset(std::initializer_list<int64_t> idx) const {
    if (static_cast<int>(idx.size()) != rank()) {
        throw ValidationError("index rank " + std::to_string(idx.size()) + " does not match tensor rank " +
                              std::to_string(rank()));
    }
    int64_t off = 0;
    int axis = 0;
    for (int64_t i : idx) {
        const int64_t d = shape_[static_cast<size_t>(axis)];
        if (i < 0 || i >= d) {
            throw ValidationError("index " + std::to_string(i) + " out of bounds for axis " + std::to_string(axis) +
                                  " of shape " + shape_to_string(shape_));
        }
        off = off * d + i;
        ++axis;
    }
    return off;
}

double& Tensor::at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(offset(idx))]; }
double Tensor::at(std::initializer_list<int64_t> idx) const { return data_[static_cast<size_t>(offset(idx))]; }

bool Tensor::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

Tensor Tensor::reshaped(Shape new_shape) const {
    if (shape_numel(new_shape) != numel()) {
        throw ValidationError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(new_shape));
    }
    return Tensor(std::move(new_shape), data_);
}

void Tensor::fill(double value) {
    for (auto& x : data_) x = value;
}

void Tensor::add_scaled(const Tensor& other, double factor) {
    if (!same_shape(other)) {
        throw ValidationError("add_scaled shape mismatch: " + shape_to_string(shape_) + " vs " +
                              shape_to_string(other.shape_));
    }
    const double* src = other.data();
    double* dst = data();
    const int64_t n = numel();
    for (int64_t i = 0; i < n; ++i) dst[i] += factor * src[i];
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double x : data_) m = std::max(m, std::fabs(x));
    return m;
}

}  // namespace bharnet
