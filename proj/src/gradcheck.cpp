#include "fcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fcn/errors.hpp"

namespace fcn {

GradCheckReport finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& params,
                                  const std::vector<Tensor>& analytic_grads, double eps) {
    if (eps <= 0.0) throw ValidationError("finite_diff_check: eps must be positive");
    if (params.size() != analytic_grads.size()) {
        throw ShapeError("finite_diff_check: got " + std::to_string(params.size()) +
                         " parameter tensors but " + std::to_string(analytic_grads.size()) +
                         " gradient tensors");
    }

    GradCheckReport report;
    report.per_tensor.assign(params.size(), 0.0);

    std::vector<Tensor> probe = params;
    for (std::size_t t = 0; t < probe.size(); ++t) {
        if (!probe[t].same_shape(analytic_grads[t])) {
            throw ShapeError("finite_diff_check: parameter " + probe[t].shape_str() +
                             " vs gradient " + analytic_grads[t].shape_str());
        }
        for (std::size_t i = 0; i < probe[t].size(); ++i) {
            const double saved = probe[t][i];
            probe[t][i] = saved + eps;
            const double up = f(probe);
            probe[t][i] = saved - eps;
            const double down = f(probe);
            probe[t][i] = saved;

            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = analytic_grads[t][i];
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
            const double rel = std::abs(numeric - analytic) / denom;

            report.per_tensor[t] = std::max(report.per_tensor[t], rel);
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_tensor = t;
                report.worst_coord = i;
                report.worst_analytic = analytic;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace fcn
