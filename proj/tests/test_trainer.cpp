#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dvelab/common/csv.hpp"
#include "dvelab/common/error.hpp"
#include "dvelab/trainer/agent.hpp"
#include "dvelab/trainer/config.hpp"
#include "dvelab/trainer/ppo.hpp"
#include "dvelab/trainer/rollout.hpp"
#include "dvelab/trainer/train.hpp"

using namespace dvelab;
using namespace dvelab::trainer;

namespace {

TrainConfig tiny_config(CriticMode mode) {
  TrainConfig cfg;
  cfg.critic_mode = mode;
  cfg.trunk = {16};
  cfg.hidden = 8;
  cfg.n_workers = 2;
  cfg.steps_per_worker_per_update = 64;
  cfg.total_env_steps = 2000;
  cfg.learning_rate = 1e-3;
  cfg.env.width = 5;
  cfg.env.height = 5;
  cfg.env.obs_window = 3;
  cfg.env.t_max = 20;
  cfg.env.n_levels = 6;
  return cfg;
}

std::vector<env::SceneDescriptor> pool_for(const TrainConfig& cfg) {
  return env::generate_pool(cfg.env, cfg.pool_seed);
}

std::string csv_of(const TrainReport& r) {
  std::ostringstream out;
  write_train_log(out, r);
  return out.str();
}

}  // namespace

TEST_CASE("gae: single terminal step") {
  const std::vector<double> r{1.0}, v{0.0};
  const auto est = compute_gae(r, v, std::nullopt, 0.7, 0.3);
  CHECK(est.advantages[0] == 1.0);
  CHECK(est.returns[0] == 1.0);
}

TEST_CASE("gae: zero rewards and values give zero advantages") {
  const std::vector<double> r(9, 0.0), v(9, 0.0);
  const auto est = compute_gae(r, v, std::nullopt, 0.99, 0.95);
  for (double a : est.advantages) CHECK(a == 0.0);
}

TEST_CASE("gae: hand-unrolled two-step recursion") {
  const std::vector<double> r{0.0, 1.0}, v{0.5, 0.5};
  const auto est = compute_gae(r, v, std::nullopt, 0.9, 0.95);
  // TD errors: 0 + 0.9 * 0.5 - 0.5 = -0.05 and 1 - 0.5 = 0.5.
  CHECK(est.advantages[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(est.advantages[0] == doctest::Approx(-0.05 + 0.9 * 0.95 * 0.5).epsilon(1e-15));
  CHECK(est.advantages[0] == doctest::Approx(0.3775).epsilon(1e-14));
  CHECK(est.returns[0] == doctest::Approx(0.3775 + 0.5).epsilon(1e-14));
}

TEST_CASE("gae: bootstrap value enters the last TD error") {
  const std::vector<double> r{0.0}, v{1.0};
  const auto est = compute_gae(r, v, 2.0, 0.5, 1.0);
  CHECK(est.advantages[0] == 0.0);
}

TEST_CASE("gae: mismatched lengths are rejected") {
  const std::vector<double> r{0.0, 1.0}, v{0.5};
  try {
    compute_gae(r, v, std::nullopt, 0.9, 0.95);
    FAIL("expected LENGTH_MISMATCH");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
}

TEST_CASE("clipped surrogate hand value") {
  CHECK(clipped_surrogate(1.3, 1.0, 0.2) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(clipped_surrogate(1.3, -1.0, 0.2) == doctest::Approx(-1.3).epsilon(1e-15));
  CHECK(clipped_surrogate(0.5, 1.0, 0.2) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(clipped_surrogate(1.0, 2.0, 0.2) == 2.0);
}

TEST_CASE("plateau detector") {
  const std::vector<double> flat(20, 31.0);
  CHECK(plateau_detector(flat, 20, 0.1));
  std::vector<double> rising(20);
  std::iota(rising.begin(), rising.end(), 1.0);
  CHECK_FALSE(plateau_detector(rising, 20, 0.05));
  const std::vector<double> h{30, 32, 31, 31, 30, 31};
  // x-centred sums: Sxy = -0.5, Sxx = 17.5.
  CHECK(ols_slope(h) == doctest::Approx(-1.0 / 35.0).epsilon(1e-14));
  CHECK(plateau_detector(h, 6, 0.05));
  // Only the last W points count.
  std::vector<double> late{1, 2, 3, 4, 5, 9, 9, 9};
  CHECK(plateau_detector(late, 3, 0.1));
  try {
    plateau_detector(h, 7, 0.05);
    FAIL("expected INSUFFICIENT_HISTORY");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientHistory);
  }
}

TEST_CASE("config round-trips through key = value text and rejects unknown keys") {
  auto kv = KvConfig::parse("critic_mode = sparse-dve\nn_b = 2\ntrunk = 32,16\nfamilies = corridor:1, maze:3\nk1 = 0.2\n");
  const auto cfg = TrainConfig::from_kv(kv);
  CHECK(cfg.critic_mode == CriticMode::SparseDve);
  CHECK(cfg.n_b == 2);
  CHECK(cfg.trunk == std::vector<std::size_t>{32, 16});
  CHECK(cfg.env.family_mix.size() == 2);
  CHECK(cfg.env.family_mix[1].second == 3.0);
  const auto back = TrainConfig::from_kv(KvConfig::parse(cfg.to_kv().render()));
  CHECK(back.to_kv().render() == cfg.to_kv().render());
  CHECK_THROWS_AS(TrainConfig::from_kv(KvConfig::parse("learning_rat = 1")), Error);
  CHECK_THROWS_AS(TrainConfig::from_kv(KvConfig::parse("clip_eps = 1.5")), Error);
  CHECK_THROWS_AS(TrainConfig::from_kv(KvConfig::parse("n_workers = 0")), Error);
}

TEST_CASE("greedy policy on one corridor replays the same trajectory") {
  TrainConfig cfg = tiny_config(CriticMode::Baseline);
  cfg.env.family_mix = {{env::Family::Corridor, 1.0}};
  cfg.env.n_levels = 1;
  const auto pool = pool_for(cfg);
  const net::Network net(network_spec(cfg), 3);
  RolloutConfig rc{.n_workers = 2, .steps_per_worker = 50, .greedy = true};
  auto rngs = make_worker_streams(1, 2);
  const auto batch = collect_rollouts(net, pool, cfg.env, rc, rngs);
  REQUIRE(batch.trajectories.size() > 2);
  for (const auto& t : batch.trajectories) {
    CHECK(t.actions == batch.trajectories[0].actions);
    CHECK(t.rewards == batch.trajectories[0].rewards);
  }
}

TEST_CASE("rollouts are deterministic with two workers") {
  const TrainConfig cfg = tiny_config(CriticMode::Dve);
  const auto pool = pool_for(cfg);
  const net::Network net(network_spec(cfg), 4);
  RolloutConfig rc{.n_workers = 2, .steps_per_worker = 200};
  auto a_rngs = make_worker_streams(9, 2);
  auto b_rngs = make_worker_streams(9, 2);
  const auto a = collect_rollouts(net, pool, cfg.env, rc, a_rngs);
  const auto b = collect_rollouts(net, pool, cfg.env, rc, b_rngs);
  REQUIRE(a.trajectories.size() == b.trajectories.size());
  for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
    CHECK(a.trajectories[i].actions == b.trajectories[i].actions);
    CHECK(a.trajectories[i].log_probs == b.trajectories[i].log_probs);
    CHECK(a.trajectories[i].values == b.trajectories[i].values);
    CHECK(a.trajectories[i].scene_id == b.trajectories[i].scene_id);
  }
  for (const auto& t : a.trajectories) {
    CHECK(t.length() <= static_cast<std::size_t>(cfg.env.t_max));
    CHECK(t.attention.length() == t.length());
    CHECK(t.states.size() == t.length());
    CHECK(t.states[0] == net::RecurrentState::zeros(cfg.hidden));
  }
}

TEST_CASE("scenes are drawn uniformly from the pool") {
  TrainConfig cfg = tiny_config(CriticMode::Baseline);
  cfg.env.n_levels = 100;
  cfg.env.t_max = 10;
  cfg.trunk = {};
  cfg.hidden = 2;
  const auto pool = pool_for(cfg);
  const net::Network net(network_spec(cfg), 5);
  RolloutConfig rc{.n_workers = 1, .steps_per_worker = 1, .min_episodes_per_worker = 10000};
  auto rngs = make_worker_streams(2, 1);
  const auto batch = collect_rollouts(net, pool, cfg.env, rc, rngs);
  REQUIRE(batch.trajectories.size() == 10000);
  std::vector<int> counts(100, 0);
  for (const auto& t : batch.trajectories) ++counts[static_cast<std::size_t>(t.scene_id)];
  const double expected = 100.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // Wilson-Hilferty approximation of the 0.999 quantile of chi-square with 99 dof.
  const double k = 99.0;
  const double z = 3.090232;
  const double crit = k * std::pow(1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k)), 3);
  CHECK(chi2 < crit);
  const double sigma = std::sqrt(10000 * 0.01 * 0.99);
  for (int c : counts) CHECK(std::abs(c - expected) < 4.0 * sigma);
}

TEST_CASE("with unchanged parameters the ratio is one and the policy loss is minus mean advantage") {
  TrainConfig cfg = tiny_config(CriticMode::Baseline);
  const auto pool = pool_for(cfg);
  const net::Network net(network_spec(cfg), 6);
  auto rngs = make_worker_streams(3, 2);
  auto batch = collect_rollouts(net, pool, cfg.env, {.n_workers = 2, .steps_per_worker = 100}, rngs);
  compute_advantages(batch, cfg.gamma, cfg.gae_lambda, false);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& t : batch.trajectories) {
    for (double a : t.advantages) {
      sum += a;
      ++n;
    }
  }
  const auto report = evaluate_losses(net, batch, cfg);
  CHECK(report.policy_loss == doctest::Approx(-sum / static_cast<double>(n)).epsilon(1e-12));
}

TEST_CASE("normalized advantages have zero mean and unit spread") {
  TrainConfig cfg = tiny_config(CriticMode::Baseline);
  const auto pool = pool_for(cfg);
  const net::Network net(network_spec(cfg), 6);
  auto rngs = make_worker_streams(3, 2);
  auto batch = collect_rollouts(net, pool, cfg.env, {.n_workers = 2, .steps_per_worker = 100}, rngs);
  auto raw = batch;
  compute_advantages(raw, cfg.gamma, cfg.gae_lambda, false);
  compute_advantages(batch, cfg.gamma, cfg.gae_lambda, true);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < batch.trajectories.size(); ++k) {
    for (std::size_t t = 0; t < batch.trajectories[k].length(); ++t) {
      const double a = batch.trajectories[k].advantages[t];
      sum += a;
      sq += a * a;
      ++n;
      // Sign pattern relative to the mean is preserved by the positive affine map.
      CHECK(batch.trajectories[k].returns[t] == raw.trajectories[k].returns[t]);
    }
  }
  CHECK(std::abs(sum / n) < 1e-12);
  CHECK(std::abs(sq / n - 1.0) < 1e-10);
}

TEST_CASE("zero advantages produce no policy gradient") {
  TrainConfig cfg = tiny_config(CriticMode::Baseline);
  const auto pool = pool_for(cfg);
  net::Network net(network_spec(cfg), 7);
  auto rngs = make_worker_streams(4, 2);
  auto batch = collect_rollouts(net, pool, cfg.env, {.n_workers = 2, .steps_per_worker = 60}, rngs);
  compute_advantages(batch, cfg.gamma, cfg.gae_lambda, false);
  for (auto& t : batch.trajectories) std::fill(t.advantages.begin(), t.advantages.end(), 0.0);
  std::vector<const Trajectory*> all;
  for (const auto& t : batch.trajectories) all.push_back(&t);
  net.params.zero_grad();
  net::Tape tape(net.params.values(), net.params.grads());
  const auto loss = minibatch_loss(tape, net, all, cfg, 0.0);
  tape.backward(loss.policy);
  for (double g : net.params.grads()) CHECK(g == 0.0);
}

TEST_CASE("ppo_update changes parameters and reports finite losses") {
  TrainConfig cfg = tiny_config(CriticMode::SparseDve);
  const auto pool = pool_for(cfg);
  net::Network net(network_spec(cfg), 8);
  const auto before = net.params;
  auto rngs = make_worker_streams(5, 2);
  auto batch = collect_rollouts(net, pool, cfg.env, {.n_workers = 2, .steps_per_worker = 60}, rngs);
  compute_advantages(batch, cfg.gamma, cfg.gae_lambda, true);
  net::Adam adam(net.params.size());
  Rng shuffle = make_stream(1, "test");
  const auto report = ppo_update(net, adam, batch, cfg, shuffle, UpdateOptions{.cc_weight = 1.0, .trainable = {}});
  CHECK(std::isfinite(report.total));
  CHECK(report.cc_term2 < 0.0);
  CHECK(report.minibatches ==
        cfg.epochs_per_update * static_cast<int>((batch.trajectories.size() + 3) / 4));
  CHECK_FALSE(net.params == before);
  CHECK(net.params.all_finite());
}

TEST_CASE("confusion-contribution gradient never reaches the hypothesis means") {
  TrainConfig cfg = tiny_config(CriticMode::SparseDve);
  const auto pool = pool_for(cfg);
  net::Network net(network_spec(cfg), 9);
  Rng init = make_stream(1, "test");
  // Away from uniform attention, where the loss is stationary.
  for (double& v : net.params.values("attention.W")) v = uniform01(init) - 0.5;
  auto rngs = make_worker_streams(6, 2);
  auto batch = collect_rollouts(net, pool, cfg.env, {.n_workers = 2, .steps_per_worker = 40}, rngs);
  compute_advantages(batch, cfg.gamma, cfg.gae_lambda, true);
  std::vector<const Trajectory*> all;
  for (const auto& t : batch.trajectories) all.push_back(&t);
  net.params.zero_grad();
  net::Tape tape(net.params.values(), net.params.grads());
  const auto loss = minibatch_loss(tape, net, all, cfg, 1.0);
  tape.backward(tape.add(loss.cc1, loss.cc2));
  for (double g : net.params.grads("mu.W")) CHECK(g == 0.0);
  for (double g : net.params.grads("mu.b")) CHECK(g == 0.0);
  double att = 0.0;
  for (double g : net.params.grads("attention.W")) att += std::abs(g);
  CHECK(att > 0.0);
}

TEST_CASE("non-finite loss aborts the update") {
  TrainConfig cfg = tiny_config(CriticMode::Baseline);
  const auto pool = pool_for(cfg);
  net::Network net(network_spec(cfg), 10);
  auto rngs = make_worker_streams(7, 2);
  auto batch = collect_rollouts(net, pool, cfg.env, {.n_workers = 2, .steps_per_worker = 40}, rngs);
  compute_advantages(batch, cfg.gamma, cfg.gae_lambda, false);
  batch.trajectories[0].returns[0] = NAN;
  const auto before = net.params;
  net::Adam adam(net.params.size());
  Rng shuffle = make_stream(1, "test");
  cfg.minibatch_size = 1000;
  try {
    ppo_update(net, adam, batch, cfg, shuffle);
    FAIL("expected NON_FINITE_LOSS");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteLoss);
  }
  CHECK(net.params.values()[0] == before.values()[0]);
  CHECK(std::equal(net.params.values().begin(), net.params.values().end(), before.values().begin()));
}

TEST_CASE("single-worker training is bit-reproducible") {
  TrainConfig cfg = tiny_config(CriticMode::SparseDve);
  cfg.n_workers = 1;
  cfg.cc.mode = dve::CcMode::Class1;
  const auto pool = pool_for(cfg);
  const auto a = train(cfg, pool);
  const auto b = train(cfg, pool);
  CHECK(csv_of(a) == csv_of(b));
  CHECK(a.final_net.params == b.final_net.params);
}

TEST_CASE("multi-worker training is reproducible at a fixed worker count") {
  const TrainConfig cfg = tiny_config(CriticMode::Dve);
  const auto pool = pool_for(cfg);
  CHECK(csv_of(train(cfg, pool)) == csv_of(train(cfg, pool)));
}

TEST_CASE("sparse DVE with zero coefficients is identical to DVE") {
  TrainConfig dve_cfg = tiny_config(CriticMode::Dve);
  TrainConfig sparse_cfg = dve_cfg;
  sparse_cfg.critic_mode = CriticMode::SparseDve;
  sparse_cfg.cc.mode = dve::CcMode::Class1;
  sparse_cfg.cc.k1 = 0.0;
  sparse_cfg.cc.k2 = 0.0;
  const auto pool = pool_for(dve_cfg);
  const auto a = train(dve_cfg, pool);
  const auto b = train(sparse_cfg, pool);
  CHECK(csv_of(a) == csv_of(b));
  CHECK(a.final_net.params == b.final_net.params);
}

TEST_CASE("single-hypothesis DVE reproduces the baseline on one scene") {
  TrainConfig base = tiny_config(CriticMode::Baseline);
  base.env.n_levels = 1;
  base.total_env_steps = 1500;
  TrainConfig dyn = base;
  dyn.critic_mode = CriticMode::Dve;
  dyn.n_b = 1;
  const auto pool = pool_for(base);
  const auto a = train(base, pool);
  const auto b = train(dyn, pool);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(std::abs(a.rows[i].policy_loss - b.rows[i].policy_loss) <= 1e-12);
    CHECK(std::abs(a.rows[i].value_loss - b.rows[i].value_loss) <= 1e-12);
    CHECK(std::abs(a.rows[i].entropy - b.rows[i].entropy) <= 1e-12);
    CHECK(a.rows[i].mean_reward == b.rows[i].mean_reward);
    CHECK(b.rows[i].mean_delta == 1.0);
  }
}

TEST_CASE("class-2 gate keeps the confusion-contribution terms at zero until it opens") {
  TrainConfig cfg = tiny_config(CriticMode::SparseDve);
  cfg.cc.mode = dve::CcMode::Class2;
  cfg.plateau_window = 3;
  cfg.plateau_slope_threshold = 1e9;  // fires as soon as the window is full
  cfg.ramp_updates = 4;
  cfg.total_env_steps = 1500;
  const auto pool = pool_for(cfg);
  const auto report = train(cfg, pool);
  REQUIRE(report.cc_activation_update.has_value());
  const int act = *report.cc_activation_update;
  CHECK(act == 2);
  for (const auto& r : report.rows) {
    if (r.update < act) {
      CHECK(r.cc_term1 == 0.0);
      CHECK(r.cc_term2 == 0.0);
      CHECK(r.cc_weight == 0.0);
    } else {
      CHECK(r.cc_weight == doctest::Approx(std::min(1.0, (r.update - act + 1) / 4.0)));
      CHECK(r.cc_term2 != 0.0);
    }
  }
}

TEST_CASE("class-2 gate also waits for pretrain_steps") {
  TrainConfig cfg = tiny_config(CriticMode::SparseDve);
  cfg.cc.mode = dve::CcMode::Class2;
  cfg.plateau_window = 2;
  cfg.plateau_slope_threshold = 1e9;
  cfg.cc.pretrain_steps = 900;
  const auto pool = pool_for(cfg);
  const auto report = train(cfg, pool);
  REQUIRE(report.cc_activation_update.has_value());
  for (const auto& r : report.rows) {
    if (r.env_steps < 900) CHECK(r.cc_weight == 0.0);
  }
  CHECK(report.rows[static_cast<std::size_t>(*report.cc_activation_update)].env_steps >= 900);
}

TEST_CASE("critic-only fit to Monte Carlo returns lowers value error every update") {
  TrainConfig cfg = tiny_config(CriticMode::Baseline);
  cfg.epochs_per_update = 1;
  cfg.minibatch_size = 1000;
  cfg.learning_rate = 1e-3;
  cfg.entropy_coef = 0.0;
  const auto pool = pool_for(cfg);
  net::Network net(network_spec(cfg), 12);
  auto rngs = make_worker_streams(8, 2);
  auto batch = collect_rollouts(net, pool, cfg.env, {.n_workers = 2, .steps_per_worker = 200}, rngs);
  for (auto& t : batch.trajectories) {
    t.returns.assign(t.length(), 0.0);
    t.advantages.assign(t.length(), 0.0);
    double g = 0.0;
    for (std::size_t k = t.length(); k-- > 0;) t.returns[k] = g = t.rewards[k] + cfg.gamma * g;
  }
  net::Adam adam(net.params.size());
  Rng shuffle = make_stream(2, "test");
  UpdateOptions opts;
  opts.trainable = {"value.W", "value.b"};
  const auto policy_before = std::vector<double>(net.params.values("policy.W").begin(),
                                                 net.params.values("policy.W").end());
  double prev = evaluate_losses(net, batch, cfg).value_loss;
  for (int u = 0; u < 50; ++u) {
    ppo_update(net, adam, batch, cfg, shuffle, opts);
    const double now = evaluate_losses(net, batch, cfg).value_loss;
    CHECK(now < prev);
    prev = now;
  }
  const auto policy_after = net.params.values("policy.W");
  CHECK(std::equal(policy_after.begin(), policy_after.end(), policy_before.begin()));
}

TEST_CASE("train writes its artifacts") {
  TrainConfig cfg = tiny_config(CriticMode::Dve);
  cfg.total_env_steps = 300;
  const auto pool = pool_for(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "dvelab_train_artifacts";
  std::filesystem::remove_all(dir);
  const auto report = train(cfg, pool, TrainHooks{.out_dir = dir, .on_update = {}, .max_updates = {}});
  CHECK(std::filesystem::exists(dir / "train_log.csv"));
  CHECK(std::filesystem::exists(dir / "final.ckpt"));
  CHECK(std::filesystem::exists(dir / "final.ckpt.json"));
  CHECK(std::filesystem::exists(dir / "config.resolved"));
  std::ifstream in(dir / "train_log.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  const auto rows = parse_csv(ss.str());
  REQUIRE(rows.size() == report.rows.size() + 1);
  CHECK(rows[0].back() == "rho_3");
  std::filesystem::remove_all(dir);
}
