#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include "dvelab/envkit/scene.hpp"
#include "dvelab/netcore/net.hpp"
#include "dvelab/trainer/train.hpp"

namespace dvelab::analysis {

/// Mean reward over mean episode length. Throws ZERO_LENGTH unless the
/// length is positive.
double navigation_efficiency(double mean_reward, double mean_ep_len);

/// Same ratio with both means taken over the given log rows.
double navigation_efficiency(std::span<const trainer::UpdateRow> rows);

/// Mean of `mean_reward` over the last `window` rows (all rows if fewer).
double final_reward(std::span<const trainer::UpdateRow> rows, std::size_t window = 10);
double final_nav_efficiency(std::span<const trainer::UpdateRow> rows, std::size_t window = 10);

inline constexpr double kDefaultAmbiguousDelta = 0.9;

/// Attention summary of one visited state.
struct ClusterRow {
  int scene_id = 0;
  int step = 0;
  int agent_x = 0;
  int agent_y = 0;
  int argmax_cluster = 0;
  double alpha_max = 0.0;
  double delta = 0.0;
  bool ambiguous = false;
};

/// Plays `n_episodes` sampled episodes on every scene of the pool with the
/// snapshot and records the attention at each step. Throws INVALID_ARGUMENT
/// for a scalar critic.
std::vector<ClusterRow> export_cluster_assignments(const net::Network& snapshot,
                                                   std::span<const env::SceneDescriptor> pool,
                                                   const env::EnvConfig& env_cfg, int n_episodes,
                                                   std::uint64_t seed,
                                                   double ambiguous_delta = kDefaultAmbiguousDelta);

void write_cluster_csv(std::ostream& out, std::span<const ClusterRow> rows);

/// Fraction of rows on which each cluster is the argmax.
std::vector<double> cluster_shares(std::span<const ClusterRow> rows, std::size_t n_clusters);

/// Most frequent argmax cluster per scene family (ties to the lower index).
std::map<env::Family, int> family_majority_clusters(std::span<const ClusterRow> rows,
                                                    std::span<const env::SceneDescriptor> pool,
                                                    std::size_t n_clusters);

}  // namespace dvelab::analysis
