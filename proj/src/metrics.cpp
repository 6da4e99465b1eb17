#include "bharnet/metrics.hpp"

namespace bharnet {

Tensor confusion_matrix(const std::vector<int>& predictions, const std::vector<int>& labels, int num_classes) {
    if (predictions.size() != labels.size()) {
        throw ValidationError("confusion_matrix: " + std::to_string(predictions.size()) + " predictions vs " +
                              std::to_string(labels.size()) + " labels");
    }
    Tensor counts({num_classes, num_classes});
    for (size_t i = 0; i < labels.size(); ++i) {
        const int truth = labels[i];
        const int pred = predictions[i];
        if (truth < 0 || truth >= num_classes || pred < 0 || pred >= num_classes) {
            throw ValidationError("confusion_matrix: entry " + std::to_string(i) + " out of range [0," +
                                  std::to_string(num_classes) + ")");
        }
        counts[static_cast<int64_t>(truth) * num_classes + pred] += 1.0;
    }
    return counts;
}

double accuracy_from_confusion(const Tensor& confusion) {
    const int64_t k = confusion.dim(0);
    double trace = 0.0, total = 0.0;
    for (int64_t i = 0; i < k; ++i) {
        trace += confusion[i * k + i];
        for (int64_t j = 0; j < k; ++j) total += confusion[i * k + j];
    }
    return total > 0.0 ? trace / total : 0.0;
}

std::vector<double> per_class_accuracy(const Tensor& confusion) {
    const int64_t k = confusion.dim(0);
    std::vector<double> out(static_cast<size_t>(k), 0.0);
    for (int64_t i = 0; i < k; ++i) {
        double support = 0.0;
        for (int64_t j = 0; j < k; ++j) support += confusion[i * k + j];
        if (support > 0.0) out[static_cast<size_t>(i)] = confusion[i * k + i] / support;
    }
    return out;
}

double Metrics::stream_accuracy(const std::string& name) const {
    for (const auto& [key, value] : per_stream) {
        if (key == name) return value;
    }
    throw ValidationError("metrics: no stream accuracy named '" + name + "'");
}

}  // namespace bharnet
