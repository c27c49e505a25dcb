#include "dvelab/netcore/adam.hpp"

#include <algorithm>
#include <cmath>

#include "dvelab/common/error.hpp"

namespace dvelab::net {

void Adam::step(ParamVector& params, const AdamConfig& cfg) {
  if (m_.size() != params.size()) {
    throw Error(ErrorCode::DimMismatch, "optimizer state sized for a different parameter vector");
  }
  auto grads = params.grads();
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw Error(ErrorCode::NonFiniteGrad, "gradient entry " + std::to_string(i) + " is not finite");
    }
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(steps_));
  auto values = params.values();
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const double g = grads[i];
    m_[i] = cfg.beta1 * m_[i] + (1.0 - cfg.beta1) * g;
    v_[i] = cfg.beta2 * v_[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    values[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
  params.zero_grad();
}

double clip_grad_norm(ParamVector& params, double max_norm) {
  auto grads = params.grads();
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (double& g : grads) g *= k;
  }
  return norm;
}

}  // namespace dvelab::net
