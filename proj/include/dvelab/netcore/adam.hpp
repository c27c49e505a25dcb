#pragma once

#include <cstdint>
#include <vector>

#include "dvelab/netcore/params.hpp"

namespace dvelab::net {

struct AdamConfig {
  double learning_rate = 2.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. step() consumes ParamVector::grads and zeroes
/// them; a non-finite gradient throws NON_FINITE_GRAD before any write.
class Adam {
 public:
  Adam() = default;
  explicit Adam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  void step(ParamVector& params, const AdamConfig& cfg);

  std::int64_t step_count() const { return steps_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  std::int64_t steps_ = 0;
};

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ParamVector& params, double max_norm);

}  // namespace dvelab::net
