#include "bharnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bharnet {

double GradCheckReport::max_rel_err() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_err);
    return m;
}

bool GradCheckReport::pass(double tolerance) const { return max_rel_err() < tolerance; }

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    for (const auto& e : entries) {
        os << e.name << ": max_rel_err=" << e.max_rel_err << " (analytic=" << e.analytic_at_worst
           << ", fd=" << e.fd_at_worst << ", index=" << e.worst_index << ", checked=" << e.checked;
        if (e.skipped > 0) os << ", skipped=" << e.skipped;
        os << ")\n";
    }
    for (const auto& w : warnings) os << "warning: " << w << "\n";
    return os.str();
}

GradCheckReport check_gradients(const std::vector<std::pair<std::string, Tensor*>>& tensors,
                                const std::function<double()>& objective,
                                const std::function<std::vector<Tensor>()>& analytic,
                                const GradCheckOptions& opts) {
    GradCheckReport report;
    const std::vector<Tensor> grads = analytic();
    if (grads.size() != tensors.size()) {
        throw ValidationError("gradcheck: analytic() returned " + std::to_string(grads.size()) +
                              " gradients for " + std::to_string(tensors.size()) + " tensors");
    }
    const double h = opts.step;
    for (size_t t = 0; t < tensors.size(); ++t) {
        GradCheckEntry entry;
        entry.name = tensors[t].first;
        Tensor& buf = *tensors[t].second;
        const Tensor& g = grads[t];
        if (!g.same_shape(buf)) {
            throw ValidationError("gradcheck: gradient shape mismatch for " + entry.name);
        }
        for (int64_t i = 0; i < buf.numel(); ++i) {
            if (opts.exclude && opts.exclude(t, i)) {
                ++entry.skipped;
                continue;
            }
            const double saved = buf[i];
            buf[i] = saved + h;
            const double f_plus = objective();
            buf[i] = saved - h;
            const double f_minus = objective();
            buf[i] = saved;
            const double fd = (f_plus - f_minus) / (2.0 * h);
            const double a = g[i];
            const double denom = std::max({std::fabs(a), std::fabs(fd), opts.floor});
            const double rel = std::fabs(a - fd) / denom;
            ++entry.checked;
            if (rel > entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.analytic_at_worst = a;
                entry.fd_at_worst = fd;
                entry.worst_index = i;
            }
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace bharnet
