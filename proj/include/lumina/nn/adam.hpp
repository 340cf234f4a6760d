#pragma once

#include <cstdint>
#include <vector>

#include "lumina/nn/tensor.hpp"

namespace lumina::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are created lazily on the first step and
/// keep the shapes of the parameters they track.
class AdamState {
 public:
  explicit AdamState(AdamConfig config = {}) : config_(config) {}

  /// params[i] -= lr * m_hat / (sqrt(v_hat) + eps). params and grads pair up by position.
  void step(const ParameterList& params, const ParameterList& grads);

  std::int64_t step_count() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return config_; }
  void set_learning_rate(double lr) noexcept { config_.learning_rate = lr; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace lumina::nn
