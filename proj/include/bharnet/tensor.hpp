#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "bharnet/errors.hpp"
#include "bharnet/rng.hpp"

namespace bharnet {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major tensor of doubles. All heavy math in the project runs on
// raw data() pointers inside dedicated kernels; the indexed accessors are for
// construction and tests.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);
    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi);
    static Tensor normal(Shape shape, Rng& rng, double mean, double sigma);

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int axis) const;
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Bounds-checked multi-index access.
    double& at(std::initializer_list<int64_t> idx);
    double at(std::initializer_list<int64_t> idx) const;
    int64_t offset(std::initializer_list<int64_t> idx) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    Tensor reshaped(Shape new_shape) const;

    // Elementwise helpers used by optimizer/statistics code (not autodiff).
    void fill(double value);
    void add_scaled(const Tensor& other, double factor);  // this += factor * other
    double max_abs() const;

private:
    Shape shape_;
    std::vector<double> data_;
};

}  // namespace bharnet
