#pragma once

#include <functional>
#include <string>

#include "sensorscan/nn/layers.hpp"

namespace sensorscan::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares the analytic gradients already stored in params[i]->grad against fourth-order central
// finite differences of `loss`. Relative error per coordinate is |a - n| / max(|a|, |n|, floor)
// with floor = 1e-6 * max(1, |L|), the resolution limit of the difference quotient.
// `loss` must not modify the gradients. Throws if the loss is not finite.
GradCheckResult grad_check_detailed(const std::function<double()>& loss, const ParamRefs& params,
                                    double h = 3e-4);
double grad_check(const std::function<double()>& loss, const ParamRefs& params, double h = 3e-4);

}  // namespace sensorscan::nn
