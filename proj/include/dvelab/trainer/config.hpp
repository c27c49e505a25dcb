#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dvelab/common/kvconfig.hpp"
#include "dvelab/dvehead/dve.hpp"
#include "dvelab/envkit/scene.hpp"

namespace dvelab::trainer {

enum class CriticMode : std::uint8_t { Baseline, Dve, SparseDve };
const char* to_string(CriticMode m) noexcept;
CriticMode critic_mode_from_string(std::string_view s);

struct TrainConfig {
  CriticMode critic_mode = CriticMode::Baseline;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double learning_rate = 2.5e-4;
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;
  int epochs_per_update = 3;
  int minibatch_size = 4;  // whole trajectories
  int n_workers = 4;
  int steps_per_worker_per_update = 256;
  long long total_env_steps = 1'000'000;
  std::uint64_t seed = 0;

  std::size_t n_b = 3;
  dve::CcConfig cc;
  int plateau_window = 20;
  double plateau_slope_threshold = 0.1;
  int ramp_updates = 10;

  std::vector<std::size_t> trunk{64, 64};
  std::size_t hidden = 64;

  env::EnvConfig env;
  std::uint64_t pool_seed = 1;

  /// Throws CONFIG_ERROR.
  void validate() const;

  /// Every key is optional; unknown keys are rejected.
  static TrainConfig from_kv(const KvConfig& kv);
  KvConfig to_kv() const;
};

}  // namespace dvelab::trainer
