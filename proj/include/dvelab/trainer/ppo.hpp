#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dvelab/common/rng.hpp"
#include "dvelab/netcore/adam.hpp"
#include "dvelab/netcore/net.hpp"
#include "dvelab/trainer/config.hpp"
#include "dvelab/trainer/rollout.hpp"

namespace dvelab::trainer {

struct AdvantageEstimate {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// GAE(gamma, lambda). `bootstrap` is the value after the last step, or
/// nullopt for a terminal ending (bootstrap 0). Throws LENGTH_MISMATCH.
AdvantageEstimate compute_gae(std::span<const double> rewards, std::span<const double> values,
                              std::optional<double> bootstrap, double gamma, double lambda);

/// Fills advantages and returns of every trajectory (episodes are complete,
/// so each ends terminally). Normalization rescales advantages over the whole
/// batch to mean 0 and standard deviation 1; returns keep raw advantages.
void compute_advantages(RolloutBatch& batch, double gamma, double lambda, bool normalize);

/// min(r * adv, clip(r, 1 - eps, 1 + eps) * adv).
double clipped_surrogate(double ratio, double advantage, double clip_eps);

/// Ordinary least-squares slope of `y` against 0, 1, 2, ...
double ols_slope(std::span<const double> y);

/// True iff the OLS slope over the last `window` entries is at most
/// `slope_threshold`. Throws INSUFFICIENT_HISTORY.
bool plateau_detector(std::span<const double> ep_len_history, int window, double slope_threshold);

/// Mean loss terms over all minibatches of an update. cc terms carry their
/// gate weight and coefficient (weight * k1 * E[log delta], weight * k2 * E[log sum rho^2]).
struct LossReport {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double cc_term1 = 0.0;
  double cc_term2 = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
  int minibatches = 0;
};

struct UpdateOptions {
  double cc_weight = 0.0;
  /// Parameter tensors allowed to change; empty means all.
  std::vector<std::string> trainable;
};

/// Tape variables of the loss on one minibatch of whole trajectories.
struct MinibatchLoss {
  net::Var total;
  net::Var policy;
  net::Var value;
  net::Var entropy;
  net::Var cc1;  // invalid when the confusion-contribution loss is off
  net::Var cc2;
};

MinibatchLoss minibatch_loss(net::Tape& tape, const net::Network& net,
                             std::span<const Trajectory* const> trajectories,
                             const TrainConfig& cfg, double cc_weight);

/// Losses on the whole batch as one minibatch, without touching parameters.
LossReport evaluate_losses(const net::Network& net, const RolloutBatch& batch,
                           const TrainConfig& cfg, double cc_weight = 0.0);

/// epochs_per_update passes over shuffled whole-trajectory minibatches.
/// Throws NON_FINITE_LOSS before the offending step is applied.
LossReport ppo_update(net::Network& net, net::Adam& adam, const RolloutBatch& batch,
                      const TrainConfig& cfg, Rng& shuffle_rng, const UpdateOptions& opts = {});

}  // namespace dvelab::trainer
