#pragma once

#include <span>
#include <vector>

#include "dvelab/netcore/net.hpp"

namespace dvelab::trainer {

/// Which critic a network carries, read from its heads.
enum class CriticKind { Scalar, Dynamic };
CriticKind critic_kind(const net::NetSpec& spec);

/// Tape variables of one actor-critic step.
struct TapedStep {
  net::Var log_probs;
  net::Var value;
  net::Var alpha;  // invalid for a scalar critic
  net::Var mu;     // invalid for a scalar critic
  net::RecurrentVars next;
};

/// Policy log-probabilities and critic value (V or attention-weighted
/// hypotheses) for one recurrent step.
TapedStep taped_step(net::Tape& tape, const net::Network& net, std::span<const double> obs,
                     net::RecurrentVars rs);

/// Plain-valued result of one step, evaluated on a scratch tape.
struct StepEval {
  std::vector<double> log_probs;
  double value = 0.0;
  std::vector<double> alpha;  // empty for a scalar critic
  std::vector<double> mu;
  net::RecurrentState next;
};

StepEval evaluate_step(net::Tape& scratch, const net::Network& net, std::span<const double> obs,
                       const net::RecurrentState& rs);

}  // namespace dvelab::trainer
