#include "prism/adam.hpp"

#include <cmath>

#include "prism/errors.hpp"

namespace prism::num {

void AdamState::step(std::span<ParamTensor* const> params) {
  if (first_moment_.empty()) {
    for (const ParamTensor* p : params) {
      first_moment_.emplace_back(p->value.rows(), p->value.cols());
      second_moment_.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (first_moment_.size() != params.size()) {
    throw DimError("adam_step: parameter count changed between steps");
  }

  ++step_count_;
  double t = static_cast<double>(step_count_);
  double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  double bc2 = 1.0 - std::pow(cfg_.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamTensor& p = *params[i];
    if (!p.grad.same_shape(p.value)) {
      throw DimError("adam_step: grad shape mismatch for " + p.name);
    }
    Matrix& m = first_moment_[i];
    Matrix& v = second_moment_[i];
    if (!m.same_shape(p.value)) {
      throw DimError("adam_step: moment shape mismatch for " + p.name);
    }
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      double g = p.grad.data()[k];
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient in " + p.name);
      }
      double& mk = m.data()[k];
      double& vk = v.data()[k];
      mk = cfg_.beta1 * mk + (1.0 - cfg_.beta1) * g;
      vk = cfg_.beta2 * vk + (1.0 - cfg_.beta2) * g * g;
      double mhat = mk / bc1;
      double vhat = vk / bc2;
      p.value.data()[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
    ensure_finite(p.value, "adam_step: parameter " + p.name);
  }
}

}  // namespace prism::num
