#include "dvelab/trainer/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "dvelab/common/error.hpp"
#include "dvelab/trainer/agent.hpp"

namespace dvelab::trainer {

double Trajectory::total_reward() const {
  double s = 0.0;
  for (double r : rewards) s += r;
  return s;
}

std::size_t RolloutBatch::env_steps() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.length();
  return n;
}

Trajectory run_episode(const net::Network& snapshot, const env::SceneDescriptor& scene,
                       const env::EnvConfig& env_cfg, Rng& rng, bool greedy, net::Tape& scratch) {
  Trajectory traj;
  traj.scene_id = scene.scene_id;
  auto [state, obs] = env::reset(scene, env_cfg);
  net::RecurrentState rs = net::RecurrentState::zeros(snapshot.spec.hidden);
  std::vector<double> probs;
  while (!state.done) {
    StepEval e = evaluate_step(scratch, snapshot, obs.data, rs);
    probs.resize(e.log_probs.size());
    std::transform(e.log_probs.begin(), e.log_probs.end(), probs.begin(),
                   [](double lp) { return std::exp(lp); });
    const std::size_t a =
        greedy ? static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin())
               : sample_categorical(rng, probs);
    traj.observations.push_back(std::move(obs.data));
    traj.actions.push_back(static_cast<int>(a));
    traj.log_probs.push_back(e.log_probs[a]);
    traj.values.push_back(e.value);
    traj.states.push_back(std::move(rs));
    traj.positions.push_back(state.grid.agent);
    if (!e.alpha.empty()) traj.attention.push(e.alpha);
    rs = std::move(e.next);
    auto r = env::step(state, static_cast<env::Action>(a));
    traj.rewards.push_back(r.reward);
    obs = std::move(r.observation);
  }
  traj.termination_cause = state.cause;
  return traj;
}

std::vector<Rng> make_worker_streams(std::uint64_t seed, int n_workers) {
  std::vector<Rng> out;
  for (int k = 0; k < n_workers; ++k) out.push_back(make_stream(seed, "rollout/worker" + std::to_string(k)));
  return out;
}

RolloutBatch collect_rollouts(const net::Network& snapshot,
                              std::span<const env::SceneDescriptor> pool,
                              const env::EnvConfig& env_cfg, const RolloutConfig& cfg,
                              std::span<Rng> worker_rngs, std::uint64_t snapshot_id) {
  if (pool.empty()) throw Error(ErrorCode::InvalidArgument, "empty scene pool");
  if (worker_rngs.size() != static_cast<std::size_t>(cfg.n_workers) || cfg.n_workers < 1) {
    throw Error(ErrorCode::InvalidArgument, "one generator per worker required");
  }
  std::vector<std::vector<Trajectory>> per_worker(worker_rngs.size());
  auto work = [&](std::size_t k) {
    net::Tape scratch;
    Rng& rng = worker_rngs[k];
    std::size_t steps = 0;
    int episodes = 0;
    while (steps < static_cast<std::size_t>(cfg.steps_per_worker) ||
           episodes < cfg.min_episodes_per_worker) {
      const auto& scene = pool[uniform_index(rng, pool.size())];
      per_worker[k].push_back(run_episode(snapshot, scene, env_cfg, rng, cfg.greedy, scratch));
      steps += per_worker[k].back().length();
      ++episodes;
    }
  };
  if (worker_rngs.size() == 1) {
    work(0);
  } else {
    std::vector<std::exception_ptr> errors(worker_rngs.size());
    std::vector<std::thread> threads;
    for (std::size_t k = 0; k < worker_rngs.size(); ++k) {
      threads.emplace_back([&, k] {
        try {
          work(k);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  RolloutBatch batch;
  batch.snapshot_id = snapshot_id;
  for (auto& w : per_worker) {
    for (auto& t : w) batch.trajectories.push_back(std::move(t));
  }
  return batch;
}

}  // namespace dvelab::trainer
