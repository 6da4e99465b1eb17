#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bharnet/tensor.hpp"

namespace bharnet {

struct GradCheckOptions {
    double step = 1e-4;       // central-difference half-step
    double tolerance = 1e-4;  // max relative error for pass()
    double floor = 1e-6;      // denominator floor of the relative error
    // Coordinates to skip (tensor index, element index), e.g. rectifier kinks.
    std::function<bool(size_t, int64_t)> exclude;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double analytic_at_worst = 0.0;
    double fd_at_worst = 0.0;
    int64_t worst_index = -1;
    int64_t checked = 0;
    int64_t skipped = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    std::vector<std::string> warnings;

    double max_rel_err() const;
    bool pass(double tolerance) const;
    std::string summary() const;
};

// Compares analytic gradients against central finite differences.
//
// `tensors` are named views of the buffers to perturb (inputs and/or
// parameters). `objective` recomputes the scalar objective from the current
// buffer contents; `analytic` returns one gradient tensor per entry of
// `tensors`, evaluated at the current contents. The harness perturbs one
// coordinate at a time, so `objective` must be a pure function of the
// buffers.
GradCheckReport check_gradients(const std::vector<std::pair<std::string, Tensor*>>& tensors,
                                const std::function<double()>& objective,
                                const std::function<std::vector<Tensor>()>& analytic,
                                const GradCheckOptions& opts = {});

}  // namespace bharnet
