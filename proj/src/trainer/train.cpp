#include "dvelab/trainer/train.hpp"

#include <fstream>

#include "dvelab/common/csv.hpp"
#include "dvelab/common/error.hpp"
#include "dvelab/netcore/adam.hpp"
#include "dvelab/netcore/checkpoint.hpp"
#include "dvelab/trainer/ppo.hpp"
#include "dvelab/trainer/rollout.hpp"

namespace dvelab::trainer {

double CcGate::weight(int update, long long env_steps, std::span<const double> ep_len_history) {
  if (cfg_.critic_mode != CriticMode::SparseDve) return 0.0;
  if (cfg_.cc.mode == dve::CcMode::Class1) {
    if (!activation_) activation_ = update;
    return 1.0;
  }
  if (!activation_) {
    const bool enough = ep_len_history.size() >= static_cast<std::size_t>(cfg_.plateau_window);
    if (enough && env_steps >= cfg_.cc.pretrain_steps &&
        plateau_detector(ep_len_history, cfg_.plateau_window, cfg_.plateau_slope_threshold)) {
      activation_ = update;
    }
  }
  if (!activation_) return 0.0;
  const double k = static_cast<double>(update - *activation_ + 1) / cfg_.ramp_updates;
  return std::min(1.0, k);
}

net::NetSpec network_spec(const TrainConfig& cfg) {
  const bool dynamic = cfg.critic_mode != CriticMode::Baseline;
  return net::actor_critic_spec(cfg.env.observation_size(), env::kNumActions, dynamic, cfg.n_b,
                                cfg.trunk, cfg.hidden);
}

namespace {

UpdateRow summarize(const RolloutBatch& batch, std::size_t n_b, bool dynamic) {
  UpdateRow row;
  double reward = 0.0;
  double len = 0.0;
  for (const auto& t : batch.trajectories) {
    reward += t.total_reward();
    len += static_cast<double>(t.length());
  }
  const double n = static_cast<double>(batch.trajectories.size());
  row.episodes = static_cast<int>(batch.trajectories.size());
  row.mean_reward = reward / n;
  row.mean_ep_len = len / n;
  row.nav_efficiency = row.mean_reward / row.mean_ep_len;
  if (dynamic) {
    double delta_sum = 0.0;
    row.rho.assign(n_b, 0.0);
    for (const auto& t : batch.trajectories) {
      for (std::size_t s = 0; s < t.attention.length(); ++s) delta_sum += t.attention.delta(s);
      const auto rho = dve::contribution(t.attention);
      for (std::size_t i = 0; i < n_b; ++i) row.rho[i] += rho[i] / n;
    }
    row.mean_delta = delta_sum / len;
  }
  return row;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

}  // namespace

std::vector<std::string> train_log_header(std::size_t n_b) {
  std::vector<std::string> h{"update",   "env_steps",   "mean_reward", "mean_ep_len",
                             "nav_efficiency", "policy_loss", "value_loss",  "entropy",
                             "cc_term1", "cc_term2",    "mean_delta"};
  for (std::size_t i = 1; i <= n_b; ++i) h.push_back("rho_" + std::to_string(i));
  return h;
}

void write_train_log(std::ostream& out, const TrainReport& report) {
  const std::size_t n_b = report.config.n_b;
  const bool dynamic = report.config.critic_mode != CriticMode::Baseline;
  CsvWriter w(out, train_log_header(n_b));
  for (const auto& r : report.rows) {
    w.field(r.update).field(static_cast<long long>(r.env_steps)).field(r.mean_reward)
        .field(r.mean_ep_len).field(r.nav_efficiency).field(r.policy_loss).field(r.value_loss)
        .field(r.entropy);
    if (dynamic) {
      w.field(r.cc_term1).field(r.cc_term2).field(r.mean_delta);
      for (double v : r.rho) w.field(v);
    } else {
      w.empty().empty().empty();
      for (std::size_t i = 0; i < n_b; ++i) w.empty();
    }
    w.end_row();
  }
}

TrainReport train(const TrainConfig& cfg, std::span<const env::SceneDescriptor> pool,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (pool.empty()) throw Error(ErrorCode::InvalidArgument, "empty scene pool");
  TrainReport report;
  report.config = cfg;
  report.final_net = net::Network(network_spec(cfg), cfg.seed);
  net::Network& net = report.final_net;
  net::Adam adam(net.params.size());
  auto workers = make_worker_streams(cfg.seed, cfg.n_workers);
  Rng shuffle_rng = make_stream(cfg.seed, "ppo/minibatch");
  CcGate gate(cfg);
  const bool dynamic = cfg.critic_mode != CriticMode::Baseline;

  if (hooks.out_dir) {
    std::filesystem::create_directories(*hooks.out_dir);
    write_file(*hooks.out_dir / "config.resolved", cfg.to_kv().render());
  }

  RolloutConfig rcfg;
  rcfg.n_workers = cfg.n_workers;
  rcfg.steps_per_worker = cfg.steps_per_worker_per_update;

  std::vector<double> ep_len_history;
  long long env_steps = 0;
  for (int update = 0; env_steps < cfg.total_env_steps; ++update) {
    if (hooks.max_updates && update >= *hooks.max_updates) break;
    RolloutBatch batch = collect_rollouts(net, pool, cfg.env, rcfg, workers,
                                          static_cast<std::uint64_t>(update));
    env_steps += static_cast<long long>(batch.env_steps());
    UpdateRow row = summarize(batch, cfg.n_b, dynamic);
    row.update = update;
    row.env_steps = env_steps;
    ep_len_history.push_back(row.mean_ep_len);
    row.cc_weight = gate.weight(update, env_steps, ep_len_history);

    compute_advantages(batch, cfg.gamma, cfg.gae_lambda, cfg.normalize_advantages);
    UpdateOptions opts;
    opts.cc_weight = row.cc_weight;
    LossReport losses;
    try {
      losses = ppo_update(net, adam, batch, cfg, shuffle_rng, opts);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonFiniteLoss && hooks.out_dir) {
        net::save_checkpoint(*hooks.out_dir / "nonfinite_dump.ckpt", net);
      }
      throw;
    }
    row.policy_loss = losses.policy_loss;
    row.value_loss = losses.value_loss;
    row.entropy = losses.entropy;
    row.cc_term1 = losses.cc_term1;
    row.cc_term2 = losses.cc_term2;
    if (hooks.on_update) hooks.on_update(row);
    report.rows.push_back(std::move(row));
  }
  report.cc_activation_update = gate.activation_update();

  if (hooks.out_dir) {
    std::ofstream log(*hooks.out_dir / "train_log.csv", std::ios::binary | std::ios::trunc);
    if (!log) throw Error(ErrorCode::IoError, "cannot write train_log.csv");
    write_train_log(log, report);
    net::save_checkpoint(*hooks.out_dir / "final.ckpt", net);
  }
  return report;
}

}  // namespace dvelab::trainer
