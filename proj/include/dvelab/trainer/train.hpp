#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "dvelab/envkit/scene.hpp"
#include "dvelab/netcore/net.hpp"
#include "dvelab/trainer/config.hpp"

namespace dvelab::trainer {

/// Weight of the confusion-contribution loss per update. CLASS1 applies it
/// from the first update; CLASS2 waits until the episode-length plateau
/// detector fires and pretrain_steps have passed, then ramps linearly.
class CcGate {
 public:
  explicit CcGate(const TrainConfig& cfg) : cfg_(cfg) {}

  /// `ep_len_history` includes the current update's rollouts.
  double weight(int update, long long env_steps, std::span<const double> ep_len_history);
  std::optional<int> activation_update() const { return activation_; }

 private:
  const TrainConfig& cfg_;
  std::optional<int> activation_;
};

struct UpdateRow {
  int update = 0;
  long long env_steps = 0;
  int episodes = 0;
  double mean_reward = 0.0;
  double mean_ep_len = 0.0;
  double nav_efficiency = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double cc_term1 = 0.0;
  double cc_term2 = 0.0;
  double cc_weight = 0.0;
  double mean_delta = 0.0;  // dynamic critics only
  std::vector<double> rho;  // mean contribution per cluster over the batch's trajectories
};

struct TrainReport {
  TrainConfig config;
  std::vector<UpdateRow> rows;
  net::Network final_net;
  std::optional<int> cc_activation_update;
};

struct TrainHooks {
  /// When set: train_log.csv, final.ckpt and config.resolved are written here.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const UpdateRow&)> on_update;
  /// Stop after this many updates regardless of total_env_steps.
  std::optional<int> max_updates;
};

/// Network shape for a training configuration.
net::NetSpec network_spec(const TrainConfig& cfg);

/// Runs PPO until total_env_steps have been collected.
TrainReport train(const TrainConfig& cfg, std::span<const env::SceneDescriptor> pool,
                  const TrainHooks& hooks = {});

std::vector<std::string> train_log_header(std::size_t n_b);
void write_train_log(std::ostream& out, const TrainReport& report);

}  // namespace dvelab::trainer
