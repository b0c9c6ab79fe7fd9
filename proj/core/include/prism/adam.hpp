#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prism/matrix.hpp"

namespace prism::num {

// A named parameter matrix with its gradient accumulator. Gradients are
// zeroed at the start of each step cycle by the owning training loop.
struct ParamTensor {
  std::string name;
  Matrix value;
  Matrix grad;

  ParamTensor() = default;
  ParamTensor(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)),
        grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.set_zero(); }
};

struct AdamConfig {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moments are allocated on the first step and
// matched to parameters by position.
class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(std::span<ParamTensor* const> params);

  std::int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::int64_t step_count_ = 0;
  std::vector<Matrix> first_moment_;
  std::vector<Matrix> second_moment_;
};

inline void adam_step(std::span<ParamTensor* const> params, AdamState& state) {
  state.step(params);
}

}  // namespace prism::num
