#include "dvelab/netcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dvelab/common/rng.hpp"

namespace dvelab::net {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport check_gradients(ParamVector& params, const LossBuilder& loss, double step,
                                std::span<const std::size_t> indices) {
  params.zero_grad();
  {
    Tape tape(params.values(), params.grads());
    tape.backward(loss(tape));
  }
  const std::vector<double> analytic(params.grads().begin(), params.grads().end());
  params.zero_grad();

  auto eval = [&]() {
    Tape tape(params.values(), {});
    return tape.scalar(loss(tape));
  };

  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(params.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    indices = all;
  }
  GradCheckReport report;
  report.trials = 1;
  auto values = params.values();
  for (std::size_t i : indices) {
    const double saved = values[i];
    values[i] = saved + step;
    const double up = eval();
    values[i] = saved - step;
    const double down = eval();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double err = relative_error(analytic[i], numeric);
    ++report.entries_checked;
    if (err > report.max_rel_error || !std::isfinite(err)) {
      report.max_rel_error = std::isfinite(err) ? err : INFINITY;
      report.worst_entry = "#" + std::to_string(i);
      for (const auto& s : params.shapes()) {
        if (i >= s.offset && i < s.offset + s.size()) {
          report.worst_entry = s.name + "[" + std::to_string(i - s.offset) + "]";
        }
      }
    }
  }
  return report;
}

GradCheckReport grad_check(const NetSpec& spec, int n_trials, double /*tolerance*/,
                           std::uint64_t seed) {
  spec.validate();
  Rng rng = make_stream(seed, "gradcheck/network");
  ParamVector params = make_params(spec);
  const NetLayout layout = make_layout(spec, params);
  const auto policy = spec.head_index(kPolicyHead);
  const auto mu = spec.head_index(kMuHead);
  const auto attention = spec.head_index(kAttentionHead);

  GradCheckReport total;
  for (int trial = 0; trial < n_trials; ++trial) {
    for (double& v : params.values()) v = uniform01(rng) - 0.5;
    constexpr int kSteps = 3;
    std::vector<std::vector<double>> obs(kSteps, std::vector<double>(spec.input_dim));
    for (auto& o : obs) {
      for (double& v : o) v = uniform01(rng);
    }
    std::vector<std::vector<double>> coeff(spec.heads.size());
    for (std::size_t k = 0; k < spec.heads.size(); ++k) {
      coeff[k].resize(spec.heads[k].dim);
      for (double& v : coeff[k]) v = uniform01(rng) - 0.5;
    }
    const double v_hat_coeff = uniform01(rng) - 0.5;

    auto loss = [&](Tape& tape) {
      RecurrentVars rs = input_state(tape, RecurrentState::zeros(spec.hidden));
      Var total_loss = tape.input(0.0);
      for (int t = 0; t < kSteps; ++t) {
        const StepOutputs out = forward(tape, spec, layout, obs[t], rs);
        rs = out.next;
        for (std::size_t k = 0; k < out.heads.size(); ++k) {
          Var head = out.heads[k];
          if (policy && k == *policy) head = tape.log_softmax(head);
          if (attention && k == *attention) head = tape.softmax(head);
          total_loss = tape.add(total_loss, tape.dot(head, tape.input(coeff[k])));
        }
        if (mu && attention) {
          const Var v_hat =
              tape.dot(tape.softmax(out.heads[*attention]), out.heads[*mu]);
          total_loss = tape.add(total_loss, tape.scale(v_hat, v_hat_coeff));
        }
      }
      return total_loss;
    };
    const GradCheckReport r = check_gradients(params, loss);
    total.entries_checked += r.entries_checked;
    ++total.trials;
    if (r.max_rel_error > total.max_rel_error) {
      total.max_rel_error = r.max_rel_error;
      total.worst_entry = r.worst_entry;
    }
  }
  return total;
}

}  // namespace dvelab::net
