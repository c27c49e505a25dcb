#include "dvelab/analysis/values.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <set>

#include "dvelab/common/error.hpp"
#include "dvelab/common/rng.hpp"
#include "dvelab/netcore/adam.hpp"
#include "dvelab/trainer/agent.hpp"
#include "dvelab/trainer/ppo.hpp"
#include "dvelab/trainer/rollout.hpp"

namespace dvelab::analysis {

namespace {

constexpr int kMaxSweeps = 100000;
constexpr double kTolerance = 1e-12;

void check_probs(const ActionProbs& p) {
  double sum = 0.0;
  for (const double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw Error(ErrorCode::InvalidArgument, "policy returned an invalid probability");
    }
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "policy probabilities do not sum to 1");
  }
}

double backup(const env::SceneDescriptor& scene, const env::EnvConfig& env_cfg,
              const ActionProbs& probs, double gamma, const env::GridState& s,
              const std::map<env::GridState, double>& values) {
  double v = 0.0;
  for (int a = 0; a < env::kNumActions; ++a) {
    if (probs[a] == 0.0) continue;
    const auto tr = env::transition(scene, env_cfg, s, env::kAllActions[a]);
    double target = tr.reward;
    if (tr.cause == env::TerminationCause::Running) target += gamma * values.at(tr.next);
    v += probs[a] * target;
  }
  return v;
}

}  // namespace

double ScenePolicyValues::at(const env::GridState& s) const {
  const auto it = values.find(s);
  if (it == values.end()) throw Error(ErrorCode::MissingOracle, "state has no exact value");
  return it->second;
}

double ScenePolicyValues::start_value(const env::SceneDescriptor& scene) const {
  return at({scene.start, 0});
}

std::vector<env::GridState> reachable_states(const env::SceneDescriptor& scene,
                                             const env::EnvConfig& env_cfg,
                                             const MarkovPolicy& policy) {
  std::set<env::GridState> seen{{scene.start, 0}};
  std::deque<env::GridState> queue{{scene.start, 0}};
  while (!queue.empty()) {
    const env::GridState s = queue.front();
    queue.pop_front();
    ActionProbs probs;
    probs.fill(1.0);
    if (policy) probs = policy(s);
    for (int a = 0; a < env::kNumActions; ++a) {
      if (probs[a] <= 0.0) continue;
      const auto tr = env::transition(scene, env_cfg, s, env::kAllActions[a]);
      if (tr.cause != env::TerminationCause::Running) continue;
      if (seen.insert(tr.next).second) queue.push_back(tr.next);
    }
  }
  return {seen.begin(), seen.end()};
}

ScenePolicyValues exact_state_values(const env::SceneDescriptor& scene,
                                     const env::EnvConfig& env_cfg, const MarkovPolicy& policy,
                                     double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "gamma must lie in [0, 1]");
  }
  const auto states = reachable_states(scene, env_cfg, policy);
  std::vector<ActionProbs> probs;
  probs.reserve(states.size());
  for (const auto& s : states) {
    probs.push_back(policy(s));
    check_probs(probs.back());
  }
  ScenePolicyValues out;
  out.scene_id = scene.scene_id;
  for (const auto& s : states) out.values.emplace(s, 0.0);

  // Gauss-Seidel sweeps in state order.
  for (int sweep = 1; sweep <= kMaxSweeps; ++sweep) {
    double change = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
      const double v = backup(scene, env_cfg, probs[i], gamma, states[i], out.values);
      double& slot = out.values[states[i]];
      change = std::max(change, std::abs(v - slot));
      slot = v;
    }
    if (change < kTolerance) {
      out.sweeps = sweep;
      return out;
    }
  }
  throw Error(ErrorCode::NoConvergence,
              "policy evaluation did not converge on scene " + std::to_string(scene.scene_id));
}

double bellman_residual(const env::SceneDescriptor& scene, const env::EnvConfig& env_cfg,
                        const MarkovPolicy& policy, double gamma,
                        const ScenePolicyValues& values) {
  double worst = 0.0;
  for (const auto& [s, v] : values.values) {
    worst = std::max(worst, std::abs(v - backup(scene, env_cfg, policy(s), gamma, s, values.values)));
  }
  return worst;
}

NetworkPolicy::NetworkPolicy(const net::Network& net, const env::SceneDescriptor& scene,
                             const env::EnvConfig& env_cfg) {
  struct Frontier {
    double cost;  // -log of the path probability
    std::uint64_t order;
    env::GridState grid;
    int t;
    net::RecurrentState rs;
  };
  auto worse = [](const Frontier& a, const Frontier& b) {
    if (a.cost != b.cost) return a.cost > b.cost;
    return a.order > b.order;
  };
  std::priority_queue<Frontier, std::vector<Frontier>, decltype(worse)> frontier(worse);
  std::uint64_t order = 0;
  frontier.push({0.0, order++, {scene.start, 0}, 0, net::RecurrentState::zeros(net.spec.hidden)});
  net::Tape scratch;

  while (!frontier.empty()) {
    Frontier f = frontier.top();
    frontier.pop();
    if (entries_.count(f.grid)) continue;
    const int t_obs = std::min(f.t, env_cfg.t_max - 1);
    const auto obs = env::observe(scene, env_cfg, f.grid, t_obs);
    auto eval = trainer::evaluate_step(scratch, net, obs.data, f.rs);
    Entry e;
    for (int a = 0; a < env::kNumActions; ++a) e.probs[a] = std::exp(eval.log_probs[a]);
    double sum = 0.0;
    for (const double p : e.probs) sum += p;
    for (double& p : e.probs) p /= sum;
    e.t = f.t;
    e.path_log_prob = -f.cost;
    e.state = f.rs;
    e.value = eval.value;
    for (int a = 0; a < env::kNumActions; ++a) {
      const auto tr = env::transition(scene, env_cfg, f.grid, env::kAllActions[a]);
      if (tr.cause != env::TerminationCause::Running || entries_.count(tr.next)) continue;
      frontier.push({f.cost - eval.log_probs[a], order++, tr.next, f.t + 1, eval.next});
    }
    entries_.emplace(f.grid, std::move(e));
  }
}

const NetworkPolicy::Entry& NetworkPolicy::entry(const env::GridState& s) const {
  const auto it = entries_.find(s);
  if (it == entries_.end()) {
    throw Error(ErrorCode::InvalidArgument, "state is not reachable under the network policy");
  }
  return it->second;
}

ActionProbs NetworkPolicy::operator()(const env::GridState& s) const { return entry(s).probs; }

MarkovPolicy NetworkPolicy::as_function() const {
  return [this](const env::GridState& s) { return (*this)(s); };
}

FinetuneResult finetune_scene_critic(const net::Network& snapshot,
                                     const env::SceneDescriptor& scene,
                                     const trainer::TrainConfig& cfg, long long n_steps,
                                     std::uint64_t seed) {
  FinetuneResult out{snapshot, {}, 0.0, 0, 0};
  const bool dynamic = trainer::critic_kind(snapshot.spec) == trainer::CriticKind::Dynamic;
  const std::vector<std::string> heads =
      dynamic ? std::vector<std::string>{std::string(net::kMuHead),
                                         std::string(net::kAttentionHead)}
              : std::vector<std::string>{std::string(net::kValueHead)};
  for (const auto& h : heads) {
    out.trained_blocks.push_back(h + ".W");
    out.trained_blocks.push_back(h + ".b");
  }
  if (n_steps <= 0) return out;

  // Monte Carlo targets: with complete episodes, lambda = 1 turns GAE
  // returns into discounted returns.
  trainer::TrainConfig fit = cfg;
  fit.gae_lambda = 1.0;
  fit.normalize_advantages = false;
  net::Adam adam(out.net.params.size());
  auto rngs = trainer::make_worker_streams(seed, 1);
  Rng shuffle = make_stream(seed, "finetune/minibatch");
  const trainer::RolloutConfig rollout{1, fit.steps_per_worker_per_update, 0, false};
  trainer::UpdateOptions opts;
  opts.trainable = out.trained_blocks;
  const std::span<const env::SceneDescriptor> pool(&scene, 1);

  while (out.env_steps < n_steps) {
    auto batch = trainer::collect_rollouts(out.net, pool, cfg.env, rollout, rngs,
                                           static_cast<std::uint64_t>(out.updates));
    trainer::compute_advantages(batch, fit.gamma, fit.gae_lambda, fit.normalize_advantages);
    out.env_steps += static_cast<long long>(batch.env_steps());
    trainer::ppo_update(out.net, adam, batch, fit, shuffle, opts);
    ++out.updates;
    out.fit_error = trainer::evaluate_losses(out.net, batch, fit).value_loss;
  }
  return out;
}

double critic_rmse(const net::Network& net, const env::SceneDescriptor& scene,
                   const env::EnvConfig& env_cfg, const ScenePolicyValues& exact,
                   int n_episodes, std::uint64_t seed) {
  Rng rng = make_stream(seed, "critic_rmse");
  net::Tape scratch;
  double sq = 0.0;
  std::size_t n = 0;
  for (int e = 0; e < n_episodes; ++e) {
    const auto traj = trainer::run_episode(net, scene, env_cfg, rng, false, scratch);
    std::uint32_t claimed = 0;
    for (std::size_t t = 0; t < traj.length(); ++t) {
      const env::GridState s{traj.positions[t], claimed};
      const auto it = exact.values.find(s);
      if (it != exact.values.end()) {
        sq += (traj.values[t] - it->second) * (traj.values[t] - it->second);
        ++n;
      }
      const auto tr = env::transition(scene, env_cfg, s, env::kAllActions[traj.actions[t]]);
      claimed = tr.next.claimed;
    }
  }
  if (n == 0) throw Error(ErrorCode::EmptyBatch, "no visited state has an exact value");
  return std::sqrt(sq / static_cast<double>(n));
}

}  // namespace dvelab::analysis
