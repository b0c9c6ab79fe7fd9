#include "prism/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "prism/errors.hpp"

namespace prism::num {

GradCheckResult finite_diff_check_detail(const std::function<double()>& loss,
                                         std::span<ParamTensor* const> params,
                                         double eps) {
  GradCheckResult result;
  for (ParamTensor* p : params) {
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      double saved = p->value.data()[k];
      p->value.data()[k] = saved + eps;
      double lp = loss();
      p->value.data()[k] = saved - eps;
      double lm = loss();
      p->value.data()[k] = saved;
      if (!std::isfinite(lp) || !std::isfinite(lm)) {
        throw NumericError("finite_diff_check: non-finite loss near " +
                           p->name);
      }
      double fd = (lp - lm) / (2.0 * eps);
      double analytic = p->grad.data()[k];
      double rel = std::abs(analytic - fd) / std::max(1.0, std::abs(fd));
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p->name;
        result.worst_index = k;
      }
    }
  }
  return result;
}

}  // namespace prism::num
