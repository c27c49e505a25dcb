#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "dvelab/netcore/tape.hpp"

namespace dvelab::dve {

/// Critic output at one step: hypothesis means, attention over them, the
/// attention-weighted value and the confusion of the attention.
struct DveOutput {
  std::vector<double> mu;
  std::vector<double> alpha;
  double v_hat = 0.0;
  double delta = 1.0;
};

/// Per-step attention weights and confusion along one trajectory.
class AttentionTrace {
 public:
  AttentionTrace() = default;
  explicit AttentionTrace(std::size_t n_b) : n_b_(n_b) {}

  /// Appends one step; delta is computed from alpha.
  void push(std::span<const double> alpha);

  std::size_t length() const { return delta_.size(); }
  std::size_t n_b() const { return n_b_; }
  bool empty() const { return delta_.empty(); }
  std::span<const double> alpha(std::size_t t) const { return {alpha_.data() + t * n_b_, n_b_}; }
  double delta(std::size_t t) const { return delta_[t]; }
  double mean_delta() const;

 private:
  std::size_t n_b_ = 0;
  std::vector<double> alpha_;  // row-major, length() x n_b
  std::vector<double> delta_;
};

enum class CcMode : std::uint8_t { Class1, Class2 };
const char* to_string(CcMode m) noexcept;
CcMode cc_mode_from_string(std::string_view s);

struct CcConfig {
  double k1 = 0.1;
  double k2 = 1.0;
  double epsilon_log = 1e-8;
  CcMode mode = CcMode::Class2;
  long long pretrain_steps = 0;

  /// Throws CONFIG_ERROR.
  void validate() const;
};

/// Unweighted pieces of the confusion-contribution loss.
struct CcTerms {
  double term1 = 0.0;  // mean over all steps of log delta
  double term2 = 0.0;  // mean over trajectories of log sum_i rho_i^2
  double loss = 0.0;   // k1 * term1 + k2 * term2
};

/// Throws DIM_MISMATCH for unequal or empty inputs.
DveOutput dve_forward(std::span<const double> mu, std::span<const double> attention_logits);

/// delta = 1 / (N_b * sum_i alpha_i^2). Throws NOT_SIMPLEX when alpha has a
/// negative entry or its sum is off by more than 1e-6.
double confusion(std::span<const double> alpha);

/// rho_i = (1/T) sum_t delta_t alpha_{i,t}. Throws EMPTY_TRACE.
std::vector<double> contribution(const AttentionTrace& trace);

/// Throws EMPTY_BATCH (no traces) or EMPTY_TRACE.
CcTerms cc_loss(std::span<const AttentionTrace> traces, const CcConfig& cfg);

/// w . f + b.
double baseline_value(std::span<const double> features, std::span<const double> weight,
                      double bias);

/// Differentiable counterparts. Each returns tape variables.
namespace taped {

struct DveVars {
  net::Var alpha;
  net::Var v_hat;
  net::Var delta;
};

DveVars dve_forward(net::Tape& tape, net::Var mu, net::Var attention_logits);
net::Var confusion(net::Tape& tape, net::Var alpha);

struct CcVars {
  net::Var term1;
  net::Var term2;
};

/// `alphas[k]` holds the per-step attention variables of trajectory k.
CcVars cc_terms(net::Tape& tape, const std::vector<std::vector<net::Var>>& alphas,
                double epsilon_log);

net::Var baseline_value(net::Tape& tape, net::Var features, net::ParamBlock weight,
                        net::ParamBlock bias);

}  // namespace taped

}  // namespace dvelab::dve
