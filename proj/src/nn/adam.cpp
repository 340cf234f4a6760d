#include "lumina/nn/adam.hpp"

#include <cmath>

#include "lumina/error.hpp"

namespace lumina::nn {

void AdamState::step(const ParameterList& params, const ParameterList& grads) {
  if (params.size() != grads.size()) throw ShapeError("adam: parameter and gradient lists differ in length");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(p.tensor->zeros_like());
      v_.push_back(p.tensor->zeros_like());
    }
  } else if (m_.size() != params.size()) {
    throw ShapeError("adam: parameter list changed between steps");
  }
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k].tensor;
    const Tensor& g = *grads[k].tensor;
    require_same_shape(p, g, "adam step");
    require_same_shape(p, m_[k], "adam moments");
    double* m = m_[k].data();
    double* v = v_[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      p[i] -= config_.learning_rate * mh / (std::sqrt(vh) + config_.epsilon);
    }
  }
}

}  // namespace lumina::nn
