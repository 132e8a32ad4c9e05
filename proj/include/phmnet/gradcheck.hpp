#pragma once

// Finite-difference verification of the tape gradients: central differences
// per parameter element against one analytic backward pass.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "phmnet/tape.hpp"

namespace phm {

struct GradReport {
    struct Entry {
        std::string param;
        double max_rel_error = 0;
    };
    std::vector<Entry> per_param;
    double max_rel_error = 0;
    std::string worst_param;
    double eps = 0;
};

// `loss_fn` must rebuild the forward pass from the current parameter values
// and return the scalar loss. Relative error uses
// |a - n| / max(|a|, |n|, 1e-8).
inline GradReport grad_check(const std::vector<Parameter*>& params,
                             const std::function<double()>& loss_value,
                             const std::function<void()>& loss_backward, double eps = 1e-5) {
    if (eps < 1e-6 || eps > 1e-4) throw ConfigError("grad_check: eps must lie in [1e-6, 1e-4]");
    GradReport report;
    report.eps = eps;

    for (auto* p : params) p->zero_grad();
    loss_backward();
    std::vector<Tensor> analytic;
    for (auto* p : params) analytic.push_back(p->grad);

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        GradReport::Entry entry;
        entry.param = p.name;
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double saved = p.value.data[j];
            p.value.data[j] = saved + eps;
            const double fp = loss_value();
            p.value.data[j] = saved - eps;
            const double fm = loss_value();
            p.value.data[j] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NumericsError("grad_check: non-finite loss while perturbing " + p.name);
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[pi].data[j];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(a - numeric) / denom;
            entry.max_rel_error = std::max(entry.max_rel_error, rel);
        }
        if (entry.max_rel_error > report.max_rel_error) {
            report.max_rel_error = entry.max_rel_error;
            report.worst_param = entry.param;
        }
        report.per_param.push_back(std::move(entry));
    }
    return report;
}

}  // namespace phm
