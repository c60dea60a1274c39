#include "sensorscan/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace sensorscan::nn {

GradCheckResult grad_check_detailed(const std::function<double()>& loss, const ParamRefs& params, double h) {
  if (!(h > 0)) throw ValidationError("grad_check: step h must be > 0");
  auto eval = [&] {
    const double v = loss();
    if (!std::isfinite(v)) throw Error("grad_check: loss is not finite");
    return v;
  };
  // Finite differences cannot resolve a slope below roughly eps * |L| / h, so coordinates whose
  // true gradient is (near) zero are compared against that scale instead of against themselves.
  const double floor = 1e-6 * std::max(1.0, std::abs(eval()));
  GradCheckResult result;
  for (auto* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      Real& w = p->value.data()[i];
      const Real saved = w;
      auto at = [&](double offset) {
        w = saved + static_cast<Real>(offset);
        return eval();
      };
      // fourth-order central stencil
      const double d1 = at(h) - at(-h);
      const double d2 = at(2 * h) - at(-2 * h);
      w = saved;
      const double numeric = (8 * d1 - d2) / (12 * h);
      const double analytic = p->grad.data()[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double err = std::abs(analytic - numeric) / denom;
      if (err > result.max_rel_error) {
        result = {err, p->name, i, analytic, numeric};
      }
    }
  }
  return result;
}

double grad_check(const std::function<double()>& loss, const ParamRefs& params, double h) {
  return grad_check_detailed(loss, params, h).max_rel_error;
}

}  // namespace sensorscan::nn
