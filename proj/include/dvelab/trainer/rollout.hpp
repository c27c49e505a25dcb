#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dvelab/common/rng.hpp"
#include "dvelab/dvehead/dve.hpp"
#include "dvelab/envkit/env.hpp"
#include "dvelab/netcore/net.hpp"

namespace dvelab::trainer {

/// One complete episode. Per-step sequences all have length() entries;
/// `states` holds the recurrent state at the start of each step.
struct Trajectory {
  int scene_id = 0;
  std::vector<std::vector<double>> observations;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<net::RecurrentState> states;
  std::vector<env::Cell> positions;  // agent cell before each step
  dve::AttentionTrace attention;     // dynamic critics only
  env::TerminationCause termination_cause = env::TerminationCause::Running;

  std::vector<double> advantages;  // filled by compute_advantages
  std::vector<double> returns;

  std::size_t length() const { return actions.size(); }
  double total_reward() const;
};

struct RolloutBatch {
  std::vector<Trajectory> trajectories;
  std::uint64_t snapshot_id = 0;
  std::size_t env_steps() const;
};

struct RolloutConfig {
  int n_workers = 4;
  int steps_per_worker = 256;
  int min_episodes_per_worker = 0;
  bool greedy = false;  // argmax actions instead of sampling
};

/// Plays one episode from reset to termination.
Trajectory run_episode(const net::Network& snapshot, const env::SceneDescriptor& scene,
                       const env::EnvConfig& env_cfg, Rng& rng, bool greedy, net::Tape& scratch);

/// Each worker k draws scenes uniformly from `pool` with `worker_rngs[k]`
/// and plays whole episodes until it has at least `steps_per_worker` steps
/// and `min_episodes_per_worker` episodes. Workers run on separate threads
/// when there is more than one; results are concatenated in worker order.
RolloutBatch collect_rollouts(const net::Network& snapshot,
                              std::span<const env::SceneDescriptor> pool,
                              const env::EnvConfig& env_cfg, const RolloutConfig& cfg,
                              std::span<Rng> worker_rngs, std::uint64_t snapshot_id = 0);

/// Persistent per-worker streams "rollout/worker<k>" of one run seed.
std::vector<Rng> make_worker_streams(std::uint64_t seed, int n_workers);

}  // namespace dvelab::trainer
