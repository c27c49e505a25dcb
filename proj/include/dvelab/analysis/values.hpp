#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "dvelab/envkit/env.hpp"
#include "dvelab/netcore/net.hpp"
#include "dvelab/trainer/config.hpp"

namespace dvelab::analysis {

using ActionProbs = std::array<double, env::kNumActions>;

/// A Markov policy over the grid states of one scene.
using MarkovPolicy = std::function<ActionProbs(const env::GridState&)>;

/// V_M(s) for every reachable non-terminal grid state of one scene.
struct ScenePolicyValues {
  int scene_id = 0;
  std::map<env::GridState, double> values;
  int sweeps = 0;

  double at(const env::GridState& s) const;
  double start_value(const env::SceneDescriptor& scene) const;
};

/// Non-terminal grid states reachable from the start through actions with
/// positive probability (every action when `policy` is empty).
std::vector<env::GridState> reachable_states(const env::SceneDescriptor& scene,
                                             const env::EnvConfig& env_cfg,
                                             const MarkovPolicy& policy = {});

/// Iterative policy evaluation without a step budget. Terminal transitions
/// bootstrap zero. Throws NO_CONVERGENCE when the sup-norm change is still
/// above 1e-12 after 100000 sweeps.
ScenePolicyValues exact_state_values(const env::SceneDescriptor& scene,
                                     const env::EnvConfig& env_cfg, const MarkovPolicy& policy,
                                     double gamma);

/// max_s |V(s) - sum_a pi(a|s) (r + gamma V(s'))|.
double bellman_residual(const env::SceneDescriptor& scene, const env::EnvConfig& env_cfg,
                        const MarkovPolicy& policy, double gamma,
                        const ScenePolicyValues& values);

/// A recurrent network frozen into a Markov policy on one scene. Each state
/// gets the hidden state and step count of its most probable action path
/// from the start (best-first search on -log pi); the step count fed to the
/// observation is capped at t_max - 1.
class NetworkPolicy {
 public:
  struct Entry {
    ActionProbs probs{};
    int t = 0;
    double path_log_prob = 0.0;
    net::RecurrentState state;
    double value = 0.0;  // critic prediction at the state
  };

  NetworkPolicy(const net::Network& net, const env::SceneDescriptor& scene,
                const env::EnvConfig& env_cfg);

  ActionProbs operator()(const env::GridState& s) const;
  const Entry& entry(const env::GridState& s) const;
  const std::map<env::GridState, Entry>& entries() const { return entries_; }
  MarkovPolicy as_function() const;

 private:
  std::map<env::GridState, Entry> entries_;
};

/// Result of fitting one scene's critic head on a frozen network.
struct FinetuneResult {
  net::Network net;
  std::vector<std::string> trained_blocks;
  double fit_error = 0.0;  // value MSE on the last collected batch
  long long env_steps = 0;
  int updates = 0;
};

/// Fits only the critic head (value head, or hypothesis and attention heads
/// for a dynamic critic) to Monte Carlo discounted returns of episodes
/// played by the frozen policy on `scene`. Stops once `n_steps` environment
/// steps have been used; n_steps = 0 returns the snapshot unchanged.
FinetuneResult finetune_scene_critic(const net::Network& snapshot,
                                     const env::SceneDescriptor& scene,
                                     const trainer::TrainConfig& cfg, long long n_steps,
                                     std::uint64_t seed);

/// Root-mean-square gap between the network's critic along sampled episodes
/// and the exact values of the visited states.
double critic_rmse(const net::Network& net, const env::SceneDescriptor& scene,
                   const env::EnvConfig& env_cfg, const ScenePolicyValues& exact,
                   int n_episodes, std::uint64_t seed);

}  // namespace dvelab::analysis
