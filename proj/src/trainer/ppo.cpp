#include "dvelab/trainer/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dvelab/common/error.hpp"
#include "dvelab/trainer/agent.hpp"

namespace dvelab::trainer {

AdvantageEstimate compute_gae(std::span<const double> rewards, std::span<const double> values,
                              std::optional<double> bootstrap, double gamma, double lambda) {
  if (rewards.size() != values.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(rewards.size()) + " rewards but " +
                                               std::to_string(values.size()) + " values");
  }
  const std::size_t T = rewards.size();
  AdvantageEstimate est;
  est.advantages.resize(T);
  est.returns.resize(T);
  double next_value = bootstrap.value_or(0.0);
  double acc = 0.0;
  for (std::size_t k = T; k-- > 0;) {
    const double td = rewards[k] + gamma * next_value - values[k];
    acc = td + gamma * lambda * acc;
    est.advantages[k] = acc;
    est.returns[k] = acc + values[k];
    next_value = values[k];
  }
  return est;
}

void compute_advantages(RolloutBatch& batch, double gamma, double lambda, bool normalize) {
  double sum = 0.0;
  double sq = 0.0;
  std::size_t n = 0;
  for (auto& t : batch.trajectories) {
    auto est = compute_gae(t.rewards, t.values, std::nullopt, gamma, lambda);
    t.advantages = std::move(est.advantages);
    t.returns = std::move(est.returns);
    for (double a : t.advantages) {
      sum += a;
      ++n;
    }
  }
  if (!normalize || n == 0) return;
  const double mean = sum / static_cast<double>(n);
  for (const auto& t : batch.trajectories) {
    for (double a : t.advantages) sq += (a - mean) * (a - mean);
  }
  const double sd = std::sqrt(sq / static_cast<double>(n));
  const double scale = sd > 1e-12 ? 1.0 / sd : 1.0;
  for (auto& t : batch.trajectories) {
    for (double& a : t.advantages) a = (a - mean) * scale;
  }
}

double clipped_surrogate(double ratio, double advantage, double clip_eps) {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(ratio * advantage, clipped * advantage);
}

double ols_slope(std::span<const double> y) {
  const double n = static_cast<double>(y.size());
  if (y.size() < 2) throw Error(ErrorCode::InsufficientHistory, "slope needs two points");
  const double x_mean = (n - 1.0) / 2.0;
  double y_mean = 0.0;
  for (double v : y) y_mean += v;
  y_mean /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double dx = static_cast<double>(i) - x_mean;
    sxy += dx * (y[i] - y_mean);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

bool plateau_detector(std::span<const double> ep_len_history, int window, double slope_threshold) {
  if (window < 2 || ep_len_history.size() < static_cast<std::size_t>(window)) {
    throw Error(ErrorCode::InsufficientHistory,
                "plateau window " + std::to_string(window) + " exceeds history of " +
                    std::to_string(ep_len_history.size()));
  }
  return ols_slope(ep_len_history.last(static_cast<std::size_t>(window))) <= slope_threshold;
}

MinibatchLoss minibatch_loss(net::Tape& tape, const net::Network& net,
                             std::span<const Trajectory* const> trajectories,
                             const TrainConfig& cfg, double cc_weight) {
  if (trajectories.empty()) throw Error(ErrorCode::EmptyBatch, "empty minibatch");
  const bool use_cc = cc_weight != 0.0 && (cfg.cc.k1 != 0.0 || cfg.cc.k2 != 0.0) &&
                      critic_kind(net.spec) == CriticKind::Dynamic;
  std::vector<std::vector<net::Var>> alphas;
  net::Var surr_sum;
  net::Var sq_sum;
  net::Var ent_sum;
  std::size_t steps = 0;
  auto accumulate = [&](net::Var& acc, net::Var v) { acc = acc.valid() ? tape.add(acc, v) : v; };
  for (const Trajectory* traj : trajectories) {
    if (traj->advantages.size() != traj->length() || traj->returns.size() != traj->length()) {
      throw Error(ErrorCode::LengthMismatch, "trajectory advantages not computed");
    }
    net::RecurrentVars rs = net::input_state(tape, net::RecurrentState::zeros(net.spec.hidden));
    if (use_cc) alphas.emplace_back();
    for (std::size_t t = 0; t < traj->length(); ++t) {
      const TapedStep s = taped_step(tape, net, traj->observations[t], rs);
      rs = s.next;
      const net::Var logp = tape.pick(s.log_probs, static_cast<std::size_t>(traj->actions[t]));
      const net::Var ratio = tape.exp(tape.add_scalar(logp, -traj->log_probs[t]));
      const double adv = traj->advantages[t];
      const net::Var surr = tape.minimum(
          tape.scale(ratio, adv),
          tape.scale(tape.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), adv));
      accumulate(surr_sum, surr);
      accumulate(sq_sum, tape.square(tape.add_scalar(s.value, -traj->returns[t])));
      // Entropy of the policy: -sum p log p.
      accumulate(ent_sum, tape.scale(tape.dot(tape.exp(s.log_probs), s.log_probs), -1.0));
      if (use_cc) alphas.back().push_back(s.alpha);
      ++steps;
    }
  }
  const double inv = 1.0 / static_cast<double>(steps);
  MinibatchLoss out;
  out.policy = tape.scale(surr_sum, -inv);
  out.value = tape.scale(sq_sum, inv);
  out.entropy = tape.scale(ent_sum, inv);
  out.total = tape.sub(tape.add(out.policy, tape.scale(out.value, cfg.value_coef)),
                       tape.scale(out.entropy, cfg.entropy_coef));
  if (use_cc) {
    const auto cc = dve::taped::cc_terms(tape, alphas, cfg.cc.epsilon_log);
    out.cc1 = tape.scale(cc.term1, cc_weight * cfg.cc.k1);
    out.cc2 = tape.scale(cc.term2, cc_weight * cfg.cc.k2);
    out.total = tape.add(out.total, tape.add(out.cc1, out.cc2));
  }
  return out;
}

namespace {

void add_to_report(LossReport& r, const net::Tape& tape, const MinibatchLoss& l) {
  r.policy_loss += tape.scalar(l.policy);
  r.value_loss += tape.scalar(l.value);
  r.entropy += tape.scalar(l.entropy);
  if (l.cc1.valid()) {
    r.cc_term1 += tape.scalar(l.cc1);
    r.cc_term2 += tape.scalar(l.cc2);
  }
  r.total += tape.scalar(l.total);
  ++r.minibatches;
}

void average(LossReport& r) {
  if (r.minibatches == 0) return;
  const double k = 1.0 / r.minibatches;
  r.policy_loss *= k;
  r.value_loss *= k;
  r.entropy *= k;
  r.cc_term1 *= k;
  r.cc_term2 *= k;
  r.total *= k;
  r.grad_norm *= k;
}

}  // namespace

LossReport evaluate_losses(const net::Network& net, const RolloutBatch& batch,
                           const TrainConfig& cfg, double cc_weight) {
  std::vector<const Trajectory*> all;
  for (const auto& t : batch.trajectories) all.push_back(&t);
  net::Tape tape(net.params.values(), {});
  LossReport r;
  add_to_report(r, tape, minibatch_loss(tape, net, all, cfg, cc_weight));
  return r;
}

LossReport ppo_update(net::Network& net, net::Adam& adam, const RolloutBatch& batch,
                      const TrainConfig& cfg, Rng& shuffle_rng, const UpdateOptions& opts) {
  if (batch.trajectories.empty()) throw Error(ErrorCode::EmptyBatch, "no trajectories to learn from");
  std::vector<std::size_t> order(batch.trajectories.size());
  std::vector<char> frozen;
  if (!opts.trainable.empty()) {
    frozen.assign(net.params.size(), 1);
    for (const auto& name : opts.trainable) {
      const auto b = net.params.block(name);
      std::fill_n(frozen.begin() + static_cast<long>(b.offset), b.size(), 0);
    }
  }
  net::AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  LossReport report;
  net::Tape tape;
  std::vector<const Trajectory*> mb;
  for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    // Fisher-Yates with the library's unbiased index draw, so the order is
    // identical across standard library implementations.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);
    }
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.minibatch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch_size));
      mb.clear();
      for (std::size_t i = start; i < end; ++i) mb.push_back(&batch.trajectories[order[i]]);
      tape.bind(net.params.values(), net.params.grads());
      const MinibatchLoss loss = minibatch_loss(tape, net, mb, cfg, opts.cc_weight);
      if (!std::isfinite(tape.scalar(loss.total))) {
        net.params.zero_grad();
        throw Error(ErrorCode::NonFiniteLoss, "minibatch loss is " + std::to_string(tape.scalar(loss.total)));
      }
      add_to_report(report, tape, loss);
      tape.backward(loss.total);
      if (!frozen.empty()) {
        auto g = net.params.grads();
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (frozen[i]) g[i] = 0.0;
        }
      }
      report.grad_norm += net::clip_grad_norm(net.params, cfg.max_grad_norm);
      adam.step(net.params, adam_cfg);
    }
  }
  average(report);
  return report;
}

}  // namespace dvelab::trainer
