#include "dvelab/trainer/config.hpp"

#include <set>

#include "dvelab/common/csv.hpp"
#include "dvelab/common/error.hpp"

namespace dvelab::trainer {

const char* to_string(CriticMode m) noexcept {
  switch (m) {
    case CriticMode::Baseline: return "baseline";
    case CriticMode::Dve: return "dve";
    case CriticMode::SparseDve: return "sparse-dve";
  }
  return "unknown";
}

CriticMode critic_mode_from_string(std::string_view s) {
  if (s == "baseline" || s == "BASELINE") return CriticMode::Baseline;
  if (s == "dve" || s == "DVE") return CriticMode::Dve;
  if (s == "sparse-dve" || s == "sparse_dve" || s == "SPARSE_DVE") return CriticMode::SparseDve;
  throw Error(ErrorCode::ConfigError, "unknown critic mode '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, m); };
  env.validate();
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) fail("clip_eps must lie in (0, 1)");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) fail("gae_lambda must lie in [0, 1]");
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must lie in (0, 1)");
  if (n_workers < 1) fail("n_workers must be >= 1");
  if (epochs_per_update < 1) fail("epochs_per_update must be >= 1");
  if (minibatch_size < 1) fail("minibatch_size must be >= 1");
  if (steps_per_worker_per_update < 1) fail("steps_per_worker_per_update must be >= 1");
  if (total_env_steps < 1) fail("total_env_steps must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(entropy_coef >= 0.0) || !(value_coef >= 0.0)) fail("loss coefficients must be >= 0");
  if (!(max_grad_norm >= 0.0)) fail("max_grad_norm must be >= 0 (0 disables clipping)");
  if (n_b < 1) fail("n_b must be >= 1");
  if (plateau_window < 2) fail("plateau_window must be >= 2");
  if (ramp_updates < 1) fail("ramp_updates must be >= 1");
  if (hidden < 1) fail("hidden must be >= 1");
  for (auto w : trunk) {
    if (w < 1) fail("trunk widths must be positive");
  }
  cc.validate();
}

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& part : split(text, ',')) {
    const auto t = trim(part);
    if (t.empty()) continue;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(t, &used);
      if (used != t.size() || v < 1) throw std::invalid_argument(t);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, "bad layer width '" + t + "'");
    }
  }
  return out;
}

std::string render_mix(const std::vector<std::pair<env::Family, double>>& mix) {
  std::string out;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    out += (i ? "," : "") + std::string(env::to_string(mix[i].first)) + ":" +
           format_double(mix[i].second);
  }
  return out;
}

std::vector<std::pair<env::Family, double>> parse_mix(const std::string& text) {
  std::vector<std::pair<env::Family, double>> out;
  for (const auto& part : split(text, ',')) {
    const auto t = trim(part);
    if (t.empty()) continue;
    const auto colon = t.find(':');
    const auto family = env::family_from_string(trim(t.substr(0, colon)));
    double ratio = 1.0;
    if (colon != std::string::npos) {
      KvConfig tmp;
      tmp.set("ratio", trim(t.substr(colon + 1)));
      ratio = tmp.get_double("ratio", 1.0);
    }
    out.emplace_back(family, ratio);
  }
  if (out.empty()) throw Error(ErrorCode::ConfigError, "families list is empty");
  return out;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "critic_mode", "gamma", "gae_lambda", "clip_eps", "entropy_coef", "value_coef",
      "learning_rate", "max_grad_norm", "normalize_advantages", "epochs_per_update",
      "minibatch_size", "n_workers", "steps_per_worker_per_update", "total_env_steps", "seed",
      "n_b", "k1", "k2", "epsilon_log", "cc_mode", "pretrain_steps", "plateau_window",
      "plateau_slope_threshold", "ramp_updates", "trunk", "hidden", "n_levels", "families",
      "width", "height", "obs_window", "r_sub", "r_goal", "t_max", "pool_seed"};
  return keys;
}

}  // namespace

TrainConfig TrainConfig::from_kv(const KvConfig& kv) {
  for (const auto& [key, value] : kv.entries()) {
    if (!known_keys().count(key)) throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
  }
  TrainConfig c;
  if (const auto m = kv.get("critic_mode")) c.critic_mode = critic_mode_from_string(*m);
  c.gamma = kv.get_double("gamma", c.gamma);
  c.gae_lambda = kv.get_double("gae_lambda", c.gae_lambda);
  c.clip_eps = kv.get_double("clip_eps", c.clip_eps);
  c.entropy_coef = kv.get_double("entropy_coef", c.entropy_coef);
  c.value_coef = kv.get_double("value_coef", c.value_coef);
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.max_grad_norm = kv.get_double("max_grad_norm", c.max_grad_norm);
  c.normalize_advantages = kv.get_bool("normalize_advantages", c.normalize_advantages);
  c.epochs_per_update = static_cast<int>(kv.get_int("epochs_per_update", c.epochs_per_update));
  c.minibatch_size = static_cast<int>(kv.get_int("minibatch_size", c.minibatch_size));
  c.n_workers = static_cast<int>(kv.get_int("n_workers", c.n_workers));
  c.steps_per_worker_per_update =
      static_cast<int>(kv.get_int("steps_per_worker_per_update", c.steps_per_worker_per_update));
  c.total_env_steps = kv.get_int("total_env_steps", c.total_env_steps);
  c.seed = kv.get_u64("seed", c.seed);
  const long long n_b = kv.get_int("n_b", static_cast<long long>(c.n_b));
  if (n_b < 1) throw Error(ErrorCode::ConfigError, "n_b must be >= 1");
  c.n_b = static_cast<std::size_t>(n_b);
  c.cc.k1 = kv.get_double("k1", c.cc.k1);
  c.cc.k2 = kv.get_double("k2", c.cc.k2);
  c.cc.epsilon_log = kv.get_double("epsilon_log", c.cc.epsilon_log);
  if (const auto m = kv.get("cc_mode")) c.cc.mode = dve::cc_mode_from_string(*m);
  c.cc.pretrain_steps = kv.get_int("pretrain_steps", c.cc.pretrain_steps);
  c.plateau_window = static_cast<int>(kv.get_int("plateau_window", c.plateau_window));
  c.plateau_slope_threshold = kv.get_double("plateau_slope_threshold", c.plateau_slope_threshold);
  c.ramp_updates = static_cast<int>(kv.get_int("ramp_updates", c.ramp_updates));
  if (const auto t = kv.get("trunk")) c.trunk = parse_sizes(*t);
  const long long hidden = kv.get_int("hidden", static_cast<long long>(c.hidden));
  if (hidden < 1) throw Error(ErrorCode::ConfigError, "hidden must be >= 1");
  c.hidden = static_cast<std::size_t>(hidden);

  c.env.n_levels = static_cast<int>(kv.get_int("n_levels", c.env.n_levels));
  if (const auto f = kv.get("families")) c.env.family_mix = parse_mix(*f);
  c.env.width = static_cast<int>(kv.get_int("width", c.env.width));
  c.env.height = static_cast<int>(kv.get_int("height", c.env.height));
  c.env.obs_window = static_cast<int>(kv.get_int("obs_window", c.env.obs_window));
  c.env.r_sub = kv.get_double("r_sub", c.env.r_sub);
  c.env.r_goal = kv.get_double("r_goal", c.env.r_goal);
  c.env.t_max = static_cast<int>(kv.get_int("t_max", c.env.t_max));
  c.env.gamma = c.gamma;
  c.pool_seed = kv.get_u64("pool_seed", c.pool_seed);
  c.validate();
  return c;
}

KvConfig TrainConfig::to_kv() const {
  KvConfig kv;
  kv.set("critic_mode", to_string(critic_mode));
  kv.set("gamma", format_double(gamma));
  kv.set("gae_lambda", format_double(gae_lambda));
  kv.set("clip_eps", format_double(clip_eps));
  kv.set("entropy_coef", format_double(entropy_coef));
  kv.set("value_coef", format_double(value_coef));
  kv.set("learning_rate", format_double(learning_rate));
  kv.set("max_grad_norm", format_double(max_grad_norm));
  kv.set("normalize_advantages", normalize_advantages ? "true" : "false");
  kv.set("epochs_per_update", std::to_string(epochs_per_update));
  kv.set("minibatch_size", std::to_string(minibatch_size));
  kv.set("n_workers", std::to_string(n_workers));
  kv.set("steps_per_worker_per_update", std::to_string(steps_per_worker_per_update));
  kv.set("total_env_steps", std::to_string(total_env_steps));
  kv.set("seed", std::to_string(seed));
  kv.set("n_b", std::to_string(n_b));
  kv.set("k1", format_double(cc.k1));
  kv.set("k2", format_double(cc.k2));
  kv.set("epsilon_log", format_double(cc.epsilon_log));
  kv.set("cc_mode", dve::to_string(cc.mode));
  kv.set("pretrain_steps", std::to_string(cc.pretrain_steps));
  kv.set("plateau_window", std::to_string(plateau_window));
  kv.set("plateau_slope_threshold", format_double(plateau_slope_threshold));
  kv.set("ramp_updates", std::to_string(ramp_updates));
  kv.set("trunk", join_sizes(trunk));
  kv.set("hidden", std::to_string(hidden));
  kv.set("n_levels", std::to_string(env.n_levels));
  kv.set("families", render_mix(env.family_mix));
  kv.set("width", std::to_string(env.width));
  kv.set("height", std::to_string(env.height));
  kv.set("obs_window", std::to_string(env.obs_window));
  kv.set("r_sub", format_double(env.r_sub));
  kv.set("r_goal", format_double(env.r_goal));
  kv.set("t_max", std::to_string(env.t_max));
  kv.set("pool_seed", std::to_string(pool_seed));
  return kv;
}

}  // namespace dvelab::trainer
