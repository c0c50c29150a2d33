#pragma once

#include <functional>
#include <vector>

#include "fcn/tensor.hpp"

namespace fcn {

using ScalarFn = std::function<double(const std::vector<Tensor>&)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::vector<double> per_tensor;  // worst relative error per parameter tensor
    std::size_t worst_tensor = 0;
    std::size_t worst_coord = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Central differences (f(p+eps) - f(p-eps)) / (2*eps) per coordinate, compared
// against the supplied analytic gradients. Relative error uses denominator
// max(|analytic|, |numeric|, 1e-8).
GradCheckReport finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& params,
                                  const std::vector<Tensor>& analytic_grads, double eps);

}  // namespace fcn
