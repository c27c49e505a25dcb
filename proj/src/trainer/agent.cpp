#include "dvelab/trainer/agent.hpp"

#include "dvelab/common/error.hpp"
#include "dvelab/dvehead/dve.hpp"

namespace dvelab::trainer {

CriticKind critic_kind(const net::NetSpec& spec) {
  if (spec.head_index(net::kMuHead)) return CriticKind::Dynamic;
  if (spec.head_index(net::kValueHead)) return CriticKind::Scalar;
  throw Error(ErrorCode::InvalidArgument, "network has no critic head");
}

TapedStep taped_step(net::Tape& tape, const net::Network& net, std::span<const double> obs,
                     net::RecurrentVars rs) {
  const auto out = net::forward(tape, net.spec, net.layout, obs, rs);
  TapedStep step;
  step.next = out.next;
  step.log_probs = tape.log_softmax(out.heads[*net.spec.head_index(net::kPolicyHead)]);
  if (const auto mu = net.spec.head_index(net::kMuHead)) {
    const auto dve = dve::taped::dve_forward(
        tape, out.heads[*mu], out.heads[*net.spec.head_index(net::kAttentionHead)]);
    step.mu = out.heads[*mu];
    step.alpha = dve.alpha;
    step.value = dve.v_hat;
  } else {
    step.value = out.heads[*net.spec.head_index(net::kValueHead)];
  }
  return step;
}

StepEval evaluate_step(net::Tape& scratch, const net::Network& net, std::span<const double> obs,
                       const net::RecurrentState& rs) {
  scratch.bind(net.params.values(), {});
  const TapedStep s = taped_step(scratch, net, obs, net::input_state(scratch, rs));
  StepEval e;
  const auto lp = scratch.value(s.log_probs);
  e.log_probs.assign(lp.begin(), lp.end());
  e.value = scratch.scalar(s.value);
  if (s.alpha.valid()) {
    const auto a = scratch.value(s.alpha);
    const auto m = scratch.value(s.mu);
    e.alpha.assign(a.begin(), a.end());
    e.mu.assign(m.begin(), m.end());
  }
  e.next = net::read_state(scratch, s.next);
  return e;
}

}  // namespace dvelab::trainer
