#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "dvelab/netcore/net.hpp"
#include "dvelab/netcore/tape.hpp"

namespace dvelab::net {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::size_t trials = 0;
  std::string worst_entry;
  bool within(double tolerance) const { return max_rel_error < tolerance; }
};

/// Builds a scalar loss on a tape bound to the parameters under test.
using LossBuilder = std::function<Var(Tape&)>;

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients of `loss` against central differences
/// for every parameter entry (or only `indices` when non-empty).
GradCheckReport check_gradients(ParamVector& params, const LossBuilder& loss, double step = 1e-5,
                                std::span<const std::size_t> indices = {});

/// Random parameters and a random 3-step observation sequence per trial;
/// the loss touches every head (attention through softmax-weighted means
/// when present). Checks every parameter.
GradCheckReport grad_check(const NetSpec& spec, int n_trials, double tolerance,
                           std::uint64_t seed = 0);

}  // namespace dvelab::net
