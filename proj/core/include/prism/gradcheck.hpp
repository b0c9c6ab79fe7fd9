#pragma once

#include <functional>
#include <span>
#include <string>

#include "prism/adam.hpp"

namespace prism::num {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

// Compares the analytic gradients already stored in params[i]->grad against
// central finite differences of `loss`, which must re-evaluate the loss at
// the parameters' current values. Relative error per coordinate is
// |analytic - fd| / max(1, |fd|); the maximum over all coordinates is
// returned. The parameters are restored exactly (same bit patterns) before
// returning.
GradCheckResult finite_diff_check_detail(const std::function<double()>& loss,
                                         std::span<ParamTensor* const> params,
                                         double eps = 1e-5);

inline double finite_diff_check(const std::function<double()>& loss,
                                std::span<ParamTensor* const> params,
                                double eps = 1e-5) {
  return finite_diff_check_detail(loss, params, eps).max_rel_error;
}

}  // namespace prism::num
