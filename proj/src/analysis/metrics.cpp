#include "dvelab/analysis/metrics.hpp"

#include <algorithm>

#include "dvelab/common/csv.hpp"
#include "dvelab/common/error.hpp"
#include "dvelab/common/rng.hpp"
#include "dvelab/trainer/agent.hpp"
#include "dvelab/trainer/rollout.hpp"

namespace dvelab::analysis {

double navigation_efficiency(double mean_reward, double mean_ep_len) {
  if (!(mean_ep_len > 0.0)) throw Error(ErrorCode::ZeroLength, "mean episode length is not positive");
  return mean_reward / mean_ep_len;
}

double navigation_efficiency(std::span<const trainer::UpdateRow> rows) {
  if (rows.empty()) throw Error(ErrorCode::EmptyBatch, "no log rows");
  double reward = 0.0;
  double len = 0.0;
  for (const auto& r : rows) {
    reward += r.mean_reward;
    len += r.mean_ep_len;
  }
  const double n = static_cast<double>(rows.size());
  return navigation_efficiency(reward / n, len / n);
}

namespace {

std::span<const trainer::UpdateRow> tail(std::span<const trainer::UpdateRow> rows,
                                         std::size_t window) {
  if (rows.empty()) throw Error(ErrorCode::EmptyBatch, "no log rows");
  const std::size_t k = std::min(std::max<std::size_t>(window, 1), rows.size());
  return rows.subspan(rows.size() - k);
}

}  // namespace

double final_reward(std::span<const trainer::UpdateRow> rows, std::size_t window) {
  double sum = 0.0;
  const auto last = tail(rows, window);
  for (const auto& r : last) sum += r.mean_reward;
  return sum / static_cast<double>(last.size());
}

double final_nav_efficiency(std::span<const trainer::UpdateRow> rows, std::size_t window) {
  return navigation_efficiency(tail(rows, window));
}

std::vector<ClusterRow> export_cluster_assignments(const net::Network& snapshot,
                                                   std::span<const env::SceneDescriptor> pool,
                                                   const env::EnvConfig& env_cfg, int n_episodes,
                                                   std::uint64_t seed, double ambiguous_delta) {
  if (trainer::critic_kind(snapshot.spec) != trainer::CriticKind::Dynamic) {
    throw Error(ErrorCode::InvalidArgument, "cluster export needs a dynamic critic");
  }
  Rng rng = make_stream(seed, "clusters");
  net::Tape scratch;
  std::vector<ClusterRow> rows;
  for (const auto& scene : pool) {
    for (int e = 0; e < n_episodes; ++e) {
      const auto traj = trainer::run_episode(snapshot, scene, env_cfg, rng, false, scratch);
      for (std::size_t t = 0; t < traj.length(); ++t) {
        const auto alpha = traj.attention.alpha(t);
        const auto best = std::max_element(alpha.begin(), alpha.end());
        ClusterRow r;
        r.scene_id = scene.scene_id;
        r.step = static_cast<int>(t);
        r.agent_x = traj.positions[t].x;
        r.agent_y = traj.positions[t].y;
        r.argmax_cluster = static_cast<int>(best - alpha.begin());
        r.alpha_max = *best;
        r.delta = traj.attention.delta(t);
        r.ambiguous = r.delta > ambiguous_delta;
        rows.push_back(r);
      }
    }
  }
  return rows;
}

void write_cluster_csv(std::ostream& out, std::span<const ClusterRow> rows) {
  CsvWriter csv(out, {"scene_id", "step", "agent_x", "agent_y", "argmax_cluster", "alpha_max",
                      "delta", "ambiguous"});
  for (const auto& r : rows) {
    csv.field(r.scene_id).field(r.step).field(r.agent_x).field(r.agent_y);
    csv.field(r.argmax_cluster).field(r.alpha_max).field(r.delta).field(r.ambiguous ? 1 : 0);
    csv.end_row();
  }
}

std::vector<double> cluster_shares(std::span<const ClusterRow> rows, std::size_t n_clusters) {
  std::vector<double> share(n_clusters, 0.0);
  if (rows.empty()) return share;
  for (const auto& r : rows) share.at(static_cast<std::size_t>(r.argmax_cluster)) += 1.0;
  for (double& s : share) s /= static_cast<double>(rows.size());
  return share;
}

std::map<env::Family, int> family_majority_clusters(std::span<const ClusterRow> rows,
                                                    std::span<const env::SceneDescriptor> pool,
                                                    std::size_t n_clusters) {
  std::map<int, env::Family> family_of;
  for (const auto& s : pool) family_of[s.scene_id] = s.family;
  std::map<env::Family, std::vector<long long>> counts;
  for (const auto& r : rows) {
    auto& c = counts[family_of.at(r.scene_id)];
    c.resize(n_clusters, 0);
    ++c.at(static_cast<std::size_t>(r.argmax_cluster));
  }
  std::map<env::Family, int> out;
  for (const auto& [family, c] : counts) {
    out[family] = static_cast<int>(std::max_element(c.begin(), c.end()) - c.begin());
  }
  return out;
}

}  // namespace dvelab::analysis
