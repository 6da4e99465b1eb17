#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bharnet/tensor.hpp"

namespace bharnet {

// Entry [true][pred] counts occurrences; row sums equal per-class support.
Tensor confusion_matrix(const std::vector<int>& predictions, const std::vector<int>& labels, int num_classes);

double accuracy_from_confusion(const Tensor& confusion);
std::vector<double> per_class_accuracy(const Tensor& confusion);

struct Metrics {
    double overall_accuracy = 0.0;
    std::vector<double> per_class;
    std::vector<std::pair<std::string, double>> per_stream;  // named stream/branch accuracies
    std::vector<double> loss_history;
    Tensor confusion;

    double stream_accuracy(const std::string& name) const;
};

}  // namespace bharnet
