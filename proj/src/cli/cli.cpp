#include "dvelab/cli/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dvelab/analysis/enumerate.hpp"
#include "dvelab/analysis/gmm.hpp"
#include "dvelab/analysis/metrics.hpp"
#include "dvelab/analysis/values.hpp"
#include "dvelab/cli/bench.hpp"
#include "dvelab/cli/rundir.hpp"
#include "dvelab/common/csv.hpp"
#include "dvelab/common/error.hpp"
#include "dvelab/common/rng.hpp"
#include "dvelab/envkit/env.hpp"
#include "dvelab/netcore/checkpoint.hpp"
#include "dvelab/trainer/agent.hpp"
#include "dvelab/trainer/train.hpp"

namespace dvelab::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Argument bundles

struct ConfigArgs {
  std::string config;
  std::vector<std::string> sets;
};

struct RunArgs {
  std::string run;
  std::string checkpoint;
  ConfigArgs cfg;
};

struct TrainArgs {
  ConfigArgs cfg;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> max_updates;
  int progress_every = 50;
};

struct BenchArgs {
  std::string suite = "smoke";
  ConfigArgs cfg;
  int seeds = 4;
  std::uint64_t seed_base = 0;
  std::string modes = "baseline,dve,sparse-dve";
  std::string out;
  std::size_t window = 10;
  std::optional<int> max_updates;
};

struct ValuesArgs {
  RunArgs run;
  int scenes = 0;
  std::string out;
};

struct GmmArgs {
  std::string samples;
  std::string column = "value";
  int cmin = 1;
  int cmax = 6;
  std::uint64_t seed = 0;
  std::string out;
};

struct VarstudyArgs {
  std::uint64_t seed = 0;
  double policy_scale = 1.0;
  double offset = 0.5;
  std::string out;
};

struct LemmaArgs {
  std::uint64_t seed = 0;
  int baselines = 20;
  double policy_scale = 1.0;
  double baseline_scale = 10.0;
};

struct ClustersArgs {
  RunArgs run;
  int episodes = 4;
  std::uint64_t seed = 0;
  double ambiguous = analysis::kDefaultAmbiguousDelta;
  std::string out;
};

struct EnvArgs {
  ConfigArgs cfg;
  int scene = 0;
  std::string out;
};

// ---------------------------------------------------------------------------
// Shared plumbing

template <class F>
auto as_usage(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

std::optional<fs::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

void merge_into(KvConfig& base, const KvConfig& extra) {
  for (const auto& [k, v] : extra.entries()) base.set(k, v);
}

KvConfig load_kv(const ConfigArgs& a) {
  KvConfig kv;
  if (!a.config.empty()) {
    if (!fs::is_regular_file(a.config)) throw UsageError("config file not found: " + a.config);
    kv = as_usage([&] { return KvConfig::load(a.config); });
  }
  for (const auto& s : a.sets) as_usage([&] { kv.apply_override(s); });
  return kv;
}

trainer::TrainConfig resolve(const KvConfig& kv) {
  return as_usage([&] {
    auto cfg = trainer::TrainConfig::from_kv(kv);
    cfg.validate();
    return cfg;
  });
}

struct LoadedRun {
  trainer::TrainConfig cfg;
  net::Network net;
};

LoadedRun load_run(const RunArgs& a) {
  KvConfig kv;
  fs::path ckpt;
  if (!a.run.empty()) {
    const fs::path dir(a.run);
    if (!fs::is_directory(dir)) throw UsageError("run directory not found: " + a.run);
    const fs::path resolved = dir / "config.resolved";
    if (!fs::is_regular_file(resolved)) throw UsageError("no config.resolved in " + a.run);
    kv = as_usage([&] { return KvConfig::load(resolved.string()); });
    ckpt = dir / "final.ckpt";
  } else if (!a.checkpoint.empty()) {
    ckpt = a.checkpoint;
  } else {
    throw UsageError("need --run DIR or --checkpoint FILE");
  }
  merge_into(kv, load_kv(a.cfg));
  if (!fs::is_regular_file(ckpt)) throw UsageError("checkpoint not found: " + ckpt.string());
  auto cfg = resolve(kv);
  auto net = net::load_checkpoint(ckpt);
  if (net.spec.hash() != trainer::network_spec(cfg).hash()) {
    throw UsageError("checkpoint " + ckpt.string() + " does not match the network of the configuration");
  }
  return {std::move(cfg), std::move(net)};
}

RunManifest start_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed,
                           KvConfig config) {
  RunManifest m;
  m.run_id = dir.filename().string();
  m.command = command;
  m.build_id = build_id();
  m.seed = seed;
  m.config = std::move(config);
  m.started_at = utc_timestamp();
  return m;
}

/// Runs `body`, finalizing the manifest on success and recording the error
/// on failure before rethrowing.
template <class F>
void with_manifest(RunManifest& m, const fs::path& dir, F&& body) {
  m.save(dir);
  try {
    body();
  } catch (const std::exception& e) {
    m.status = "failed";
    m.error = e.what();
    m.finished_at = utc_timestamp();
    m.save(dir);
    throw;
  }
  m.finalize(dir);
}

std::string csv_text(const std::function<void(std::ostream&)>& fill) {
  std::ostringstream os;
  fill(os);
  return os.str();
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// train / bench

int cmd_train(const TrainArgs& a, std::ostream& out) {
  KvConfig kv = load_kv(a.cfg);
  if (!a.mode.empty()) kv.set("critic_mode", a.mode);
  if (a.seed) kv.set("seed", std::to_string(*a.seed));
  const auto cfg = resolve(kv);

  const std::string stem =
      std::string(trainer::to_string(cfg.critic_mode)) + "-seed" + std::to_string(cfg.seed);
  const fs::path dir = prepare_output_dir(opt_path(a.out), stem);
  RunManifest m = start_manifest(dir, "train", cfg.seed, cfg.to_kv());
  m.artifacts = {{"train_log", "train_log.csv"},
                 {"checkpoint", "final.ckpt"},
                 {"config", "config.resolved"}};
  out << "run directory: " << dir.string() << "\n";

  with_manifest(m, dir, [&] {
    const auto pool = env::generate_pool(cfg.env, cfg.pool_seed);
    trainer::TrainHooks hooks;
    hooks.out_dir = dir;
    hooks.max_updates = a.max_updates;
    if (a.progress_every > 0) {
      hooks.on_update = [&](const trainer::UpdateRow& r) {
        if (r.update % a.progress_every != 0) return;
        out << "update " << r.update << "  steps " << r.env_steps << "  reward " << r.mean_reward
            << "  ep_len " << r.mean_ep_len << "  cc_weight " << r.cc_weight << std::endl;
      };
    }
    const auto report = trainer::train(cfg, pool, hooks);
    out << "updates: " << report.rows.size() << "\n"
        << "final reward (last 10 updates): " << analysis::final_reward(report.rows) << "\n"
        << "final navigation efficiency: " << analysis::final_nav_efficiency(report.rows) << "\n";
    if (report.cc_activation_update) {
      out << "confusion-contribution loss active from update " << *report.cc_activation_update
          << "\n";
    }
  });
  return kExitOk;
}

std::vector<trainer::CriticMode> parse_modes(const std::string& text) {
  std::vector<trainer::CriticMode> modes;
  for (const auto& part : split(text, ',')) {
    const auto name = trim(part);
    if (name.empty()) continue;
    modes.push_back(as_usage([&] { return trainer::critic_mode_from_string(name); }));
  }
  if (modes.empty()) throw UsageError("--modes lists no mode");
  return modes;
}

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  const BenchSuite& suite = find_bench_suite(a.suite);
  KvConfig kv = as_usage([&] { return KvConfig::parse(suite.config, "suite " + suite.name); });
  merge_into(kv, load_kv(a.cfg));
  const auto modes = parse_modes(a.modes);
  if (a.seeds < 1) throw UsageError("--seeds must be >= 1");
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < a.seeds; ++k) seeds.push_back(a.seed_base + static_cast<std::uint64_t>(k));
  for (const auto mode : modes) {
    KvConfig probe = kv;
    probe.set("critic_mode", trainer::to_string(mode));
    resolve(probe);
  }

  const fs::path dir = prepare_output_dir(opt_path(a.out), "bench-" + suite.name);
  RunManifest m = start_manifest(dir, "bench", a.seed_base, kv);
  m.artifacts = {{"table_csv", "bench_table.csv"}, {"table_txt", "bench_table.txt"}};
  for (const auto mode : modes) {
    for (const auto seed : seeds) {
      const std::string run = std::string(trainer::to_string(mode)) + "-seed" + std::to_string(seed);
      m.artifacts[run + "/train_log"] = run + "/train_log.csv";
      m.artifacts[run + "/checkpoint"] = run + "/final.ckpt";
    }
  }
  out << "bench directory: " << dir.string() << "\n";

  with_manifest(m, dir, [&] {
    BenchOptions opts;
    opts.base = kv;
    opts.modes = modes;
    opts.seeds = seeds;
    opts.final_window = a.window;
    opts.max_updates = a.max_updates;
    opts.progress = &out;
    const auto runs = run_bench(opts, dir);
    const auto rows = summarize_bench(runs, modes);
    write_file_atomic(dir / "bench_table.csv",
                      csv_text([&](std::ostream& os) { write_bench_csv(os, rows); }));
    const std::string table = format_bench_table(rows);
    write_file_atomic(dir / "bench_table.txt", table);
    out << table;
  });
  return kExitOk;
}

// ---------------------------------------------------------------------------
// analyze

int cmd_values(const ValuesArgs& a, std::ostream& out) {
  const auto run = load_run(a.run);
  auto pool = env::generate_pool(run.cfg.env, run.cfg.pool_seed);
  if (a.scenes < 0) throw UsageError("--scenes must be >= 0");
  if (a.scenes > 0 && static_cast<std::size_t>(a.scenes) < pool.size()) pool.resize(a.scenes);

  const fs::path dir = prepare_output_dir(opt_path(a.out), "values");
  std::ostringstream csv_out;
  CsvWriter csv(csv_out, {"scene_id", "family", "x", "y", "claimed", "value", "critic"});
  json scenes = json::array();
  for (const auto& scene : pool) {
    const analysis::NetworkPolicy policy(run.net, scene, run.cfg.env);
    const auto values =
        analysis::exact_state_values(scene, run.cfg.env, policy.as_function(), run.cfg.gamma);
    double sum = 0.0;
    double sq_gap = 0.0;
    for (const auto& [state, v] : values.values) {
      const double critic = policy.entry(state).value;
      csv.field(scene.scene_id).field(env::to_string(scene.family)).field(state.agent.x);
      csv.field(state.agent.y).field(static_cast<long long>(state.claimed)).field(v).field(critic);
      csv.end_row();
      sum += v;
      sq_gap += (critic - v) * (critic - v);
    }
    const double n = static_cast<double>(values.values.size());
    scenes.push_back({{"scene_id", scene.scene_id},
                      {"family", env::to_string(scene.family)},
                      {"states", values.values.size()},
                      {"sweeps", values.sweeps},
                      {"start_value", values.start_value(scene)},
                      {"mean_value", sum / n},
                      {"critic_rmse", std::sqrt(sq_gap / n)}});
  }
  write_file_atomic(dir / "values.csv", csv_out.str());
  write_json(dir / "summary.json", {{"gamma", run.cfg.gamma}, {"scenes", scenes}});
  out << "exact values for " << pool.size() << " scenes written to " << (dir / "values.csv").string()
      << "\n";
  return kExitOk;
}

std::vector<double> read_samples(const GmmArgs& a) {
  if (!fs::is_regular_file(a.samples)) throw UsageError("samples file not found: " + a.samples);
  std::ifstream in(a.samples, std::ios::binary);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto rows = parse_csv(text);
  if (rows.empty()) throw UsageError("samples file is empty: " + a.samples);
  const auto& header = rows.front();
  const auto col = std::find(header.begin(), header.end(), a.column);
  if (col == header.end()) throw UsageError("no column '" + a.column + "' in " + a.samples);
  const auto idx = static_cast<std::size_t>(col - header.begin());
  std::vector<double> samples;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() == 1 && rows[r][0].empty()) continue;
    if (idx >= rows[r].size()) throw UsageError("short row " + std::to_string(r) + " in " + a.samples);
    try {
      std::size_t used = 0;
      samples.push_back(std::stod(rows[r][idx], &used));
      if (used != rows[r][idx].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw UsageError("row " + std::to_string(r) + ": '" + rows[r][idx] + "' is not a number");
    }
  }
  return samples;
}

int cmd_gmm(const GmmArgs& a, bool with_models, std::ostream& out) {
  if (a.cmin < 1 || a.cmax < a.cmin) throw UsageError("need 1 <= --cmin <= --cmax");
  const auto samples = read_samples(a);
  if (samples.size() < static_cast<std::size_t>(a.cmax)) {
    throw UsageError(std::to_string(samples.size()) + " samples cannot support " +
                     std::to_string(a.cmax) + " components");
  }
  const auto sel = analysis::select_clusters(samples, a.cmin, a.cmax, a.seed);
  const double n = static_cast<double>(samples.size());

  const fs::path dir = prepare_output_dir(opt_path(a.out), with_models ? "gmm" : "aic");
  write_file_atomic(dir / "aic_curve.csv", csv_text([&](std::ostream& os) {
                      CsvWriter csv(os, {"components", "aic", "aic_per_n", "log_likelihood"});
                      for (const auto& p : sel.curve) {
                        csv.field(p.components).field(p.aic).field(p.aic / n).field(p.log_likelihood);
                        csv.end_row();
                      }
                    }));
  if (with_models) {
    write_file_atomic(dir / "gmm_components.csv", csv_text([&](std::ostream& os) {
                        CsvWriter csv(os, {"components", "component", "weight", "mean", "variance"});
                        for (const auto& m : sel.models) {
                          for (std::size_t k = 0; k < m.components(); ++k) {
                            csv.field(m.components()).field(k).field(m.weights[k]);
                            csv.field(m.means[k]).field(m.variances[k]);
                            csv.end_row();
                          }
                        }
                      }));
  }
  json curve = json::array();
  for (const auto& p : sel.curve) {
    curve.push_back({{"components", p.components}, {"aic", p.aic}, {"aic_per_n", p.aic / n}});
  }
  write_json(dir / "summary.json", {{"samples", samples.size()},
                                    {"seed", a.seed},
                                    {"best_components", sel.best},
                                    {"curve", curve}});
  out << std::setw(10) << "C" << std::setw(16) << "AIC/N" << "\n";
  for (const auto& p : sel.curve) {
    out << std::setw(10) << p.components << std::setw(16) << std::setprecision(8) << p.aic / n
        << (p.components == sel.best ? "  <- minimum" : "") << "\n";
  }
  out << "best component count: " << sel.best << "\n";
  return kExitOk;
}

int cmd_varstudy(const VarstudyArgs& a, std::ostream& out) {
  const auto pool = analysis::stock_toy_pool();
  analysis::TabularPolicy policy(pool);
  policy.randomize(a.seed, a.policy_scale);
  const double gamma = pool.env.gamma;
  const auto visits = analysis::enumerate_visits(pool, policy, gamma);
  const analysis::ToyEvaluator values(pool, policy, gamma);
  const auto generic = analysis::scene_generic_baseline(visits);

  const analysis::OracleFunction oracle = [&](int m, const analysis::StateKey& s) {
    return std::optional<double>(values.value(m, s));
  };
  const std::vector<std::pair<std::string, analysis::StateFunction>> predictors{
      {"oracle", [&](int m, const analysis::StateKey& s) { return values.value(m, s); }},
      {"oracle_plus_c", [&](int m, const analysis::StateKey& s) { return values.value(m, s) + a.offset; }},
      {"scene_generic",
       [&](int m, const analysis::StateKey& s) { return generic.at(values.policy_row(m, s)); }},
      {"zero", [](int, const analysis::StateKey&) { return 0.0; }},
  };

  const fs::path dir = prepare_output_dir(opt_path(a.out), "varstudy");
  std::ostringstream csv_out;
  CsvWriter csv(csv_out, {"predictor", "total_variance", "minimal_variance", "prediction_error",
                          "cross_term", "score_sq_mean", "nu"});
  json rows = json::array();
  out << std::left << std::setw(16) << "predictor" << std::right << std::setw(16) << "total"
      << std::setw(16) << "minimal" << std::setw(16) << "pred_error" << std::setw(16) << "cross"
      << "\n";
  for (const auto& [name, f] : predictors) {
    const auto r = analysis::variance_decomposition(visits, f, oracle);
    csv.field(name).field(r.total_variance).field(r.minimal_variance).field(r.prediction_error);
    csv.field(r.cross_term).field(r.score_sq_mean).field(r.nu());
    csv.end_row();
    rows.push_back({{"predictor", name},
                    {"total_variance", r.total_variance},
                    {"minimal_variance", r.minimal_variance},
                    {"prediction_error", r.prediction_error},
                    {"cross_term", r.cross_term},
                    {"score_sq_mean", r.score_sq_mean},
                    {"nu", r.nu()}});
    out << std::left << std::setw(16) << name << std::right << std::setprecision(6);
    for (const double v : {r.total_variance, r.minimal_variance, r.prediction_error, r.cross_term}) {
      out << std::setw(16) << v;
    }
    out << "\n";
  }
  write_file_atomic(dir / "varstudy.csv", csv_out.str());
  write_json(dir / "summary.json", {{"seed", a.seed},
                                    {"policy_scale", a.policy_scale},
                                    {"offset", a.offset},
                                    {"gamma", gamma},
                                    {"visits", visits.size()},
                                    {"predictors", rows}});
  return kExitOk;
}

int cmd_lemma_check(const LemmaArgs& a, std::ostream& out) {
  if (a.baselines < 1) throw UsageError("--baselines must be >= 1");
  const auto pool = analysis::stock_toy_pool();
  analysis::TabularPolicy policy(pool);
  policy.randomize(a.seed, a.policy_scale);
  const double gamma = pool.env.gamma;
  const auto g0 = analysis::policy_gradient_enumerate(pool, policy, {}, gamma);

  auto deviation = [&](const analysis::StateFunction& b) {
    const auto g = analysis::policy_gradient_enumerate(pool, policy, b, gamma);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(g[i] - g0[i]));
    return worst;
  };
  double worst = 0.0;
  for (int k = 0; k < a.baselines; ++k) {
    Rng rng = make_stream(a.seed, "invariance/baseline" + std::to_string(k));
    worst = std::max(worst, deviation(analysis::random_baseline(rng(), a.baseline_scale)));
  }
  const analysis::ToyEvaluator values(pool, policy, gamma);
  const double at_value =
      deviation([&](int m, const analysis::StateKey& s) { return values.value(m, s); });

  const bool pass = worst < 1e-10 && at_value < 1e-10;
  out << "toy pool: " << pool.scenes.size() << " scenes, "
      << analysis::count_trajectories(pool, policy) << " trajectories, " << g0.size()
      << " policy parameters\n";
  out << std::scientific << std::setprecision(3);
  out << "max deviation from zero-baseline gradient over " << a.baselines
      << " random baselines: " << worst << "\n";
  out << "deviation with the exact per-scene value baseline: " << at_value << "\n";
  out << (pass ? "PASS" : "FAIL") << " (threshold 1e-10)\n";
  return pass ? kExitOk : kExitRuntime;
}

int cmd_clusters(const ClustersArgs& a, std::ostream& out) {
  if (a.episodes < 1) throw UsageError("--episodes must be >= 1");
  const auto run = load_run(a.run);
  if (trainer::critic_kind(run.net.spec) != trainer::CriticKind::Dynamic) {
    throw UsageError("cluster export needs a dve or sparse-dve checkpoint");
  }
  const auto pool = env::generate_pool(run.cfg.env, run.cfg.pool_seed);
  const auto rows =
      analysis::export_cluster_assignments(run.net, pool, run.cfg.env, a.episodes, a.seed, a.ambiguous);
  const fs::path dir = prepare_output_dir(opt_path(a.out), "clusters");
  write_file_atomic(dir / "clusters.csv",
                    csv_text([&](std::ostream& os) { analysis::write_cluster_csv(os, rows); }));

  const auto shares = analysis::cluster_shares(rows, run.cfg.n_b);
  const auto majority = analysis::family_majority_clusters(rows, pool, run.cfg.n_b);
  json fam = json::object();
  for (const auto& [f, c] : majority) fam[env::to_string(f)] = c;
  std::size_t ambiguous = 0;
  for (const auto& r : rows) ambiguous += r.ambiguous ? 1 : 0;
  write_json(dir / "summary.json", {{"states", rows.size()},
                                    {"ambiguous", ambiguous},
                                    {"cluster_shares", shares},
                                    {"family_majority_cluster", fam}});
  out << "visited states: " << rows.size() << " (" << ambiguous << " ambiguous)\n";
  for (std::size_t k = 0; k < shares.size(); ++k) {
    out << "cluster " << k << ": argmax share " << shares[k] << "\n";
  }
  for (const auto& [f, c] : majority) out << env::to_string(f) << " -> cluster " << c << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// env

int cmd_env_show(const EnvArgs& a, std::ostream& out) {
  const KvConfig kv = load_kv(a.cfg);
  const auto cfg = resolve(kv);
  const auto pool = env::generate_pool(cfg.env, cfg.pool_seed);
  if (a.scene < 0 || static_cast<std::size_t>(a.scene) >= pool.size()) {
    throw UsageError("--scene must lie in [0, " + std::to_string(pool.size()) + ")");
  }
  const auto& s = pool[static_cast<std::size_t>(a.scene)];
  const auto path = env::shortest_path_length(s);
  out << "scene " << s.scene_id << "  family " << env::to_string(s.family) << "  seed " << s.seed
      << "  " << s.width << "x" << s.height << "  shortest path "
      << (path ? std::to_string(*path) : std::string("none")) << "\n";
  out << env::to_ascii(s);
  return kExitOk;
}

int cmd_env_export(const EnvArgs& a, std::ostream& out) {
  const auto cfg = resolve(load_kv(a.cfg));
  const auto pool = env::generate_pool(cfg.env, cfg.pool_seed);
  const fs::path dir = prepare_output_dir(opt_path(a.out), "scenes");
  fs::create_directories(dir / "scenes");
  for (const auto& s : pool) {
    write_file_atomic(dir / "scenes" / (std::to_string(s.scene_id) + ".json"),
                      env::to_json(s).dump(2) + "\n");
  }
  write_file_atomic(dir / "pool.conf", cfg.to_kv().render());
  out << pool.size() << " scene descriptors written to " << (dir / "scenes").string() << "\n";
  return kExitOk;
}

void add_config_options(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("--config", a.config, "Flat key = value configuration file");
  cmd->add_option("--set", a.sets, "Override as key=value (repeatable)");
}

void add_run_options(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--run", a.run, "Run directory holding final.ckpt and config.resolved");
  cmd->add_option("--checkpoint", a.checkpoint, "Checkpoint file (with --config)");
  add_config_options(cmd, a.cfg);
}

/// The innermost subcommand named on the command line, for usage text.
const CLI::App* deepest_parsed(const CLI::App& app) {
  const CLI::App* target = &app;
  for (auto chosen = app.get_subcommands(); !chosen.empty(); chosen = target->get_subcommands()) {
    target = chosen.front();
  }
  return target;
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamic value estimation lab: train, benchmark and analyze agents", "dvelab"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train one agent into a fresh run directory");
  add_config_options(train, train_args.cfg);
  train->add_option("--mode", train_args.mode, "baseline | dve | sparse-dve");
  train->add_option("--seed", train_args.seed, "Run seed");
  train->add_option("--out", train_args.out, "Run directory (must be absent or empty)");
  train->add_option("--max-updates", train_args.max_updates, "Stop after this many updates");
  train->add_option("--progress-every", train_args.progress_every, "Print every N updates (0: never)");

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Train every mode over several seeds and tabulate");
  std::string suite_help = "Suite name:";
  for (const auto& s : bench_suites()) suite_help += " " + s.name;
  bench->add_option("--suite", bench_args.suite, suite_help);
  add_config_options(bench, bench_args.cfg);
  bench->add_option("--seeds", bench_args.seeds, "Number of seeds");
  bench->add_option("--seed-base", bench_args.seed_base, "First seed");
  bench->add_option("--modes", bench_args.modes, "Comma-separated modes");
  bench->add_option("--out", bench_args.out, "Bench directory (must be absent or empty)");
  bench->add_option("--window", bench_args.window, "Final-reward window in updates");
  bench->add_option("--max-updates", bench_args.max_updates, "Stop each run after N updates");

  auto* analyze = app.add_subcommand("analyze", "Exact-value, clustering and variance analyses");
  analyze->require_subcommand(1);

  ValuesArgs values_args;
  auto* values = analyze->add_subcommand("values", "Exact per-scene state values of a trained policy");
  add_run_options(values, values_args.run);
  values->add_option("--scenes", values_args.scenes, "Only the first N scenes (0: all)");
  values->add_option("--out", values_args.out, "Output directory");

  GmmArgs gmm_args;
  auto* gmm = analyze->add_subcommand("gmm", "Fit mixtures over a component range");
  auto* aic = analyze->add_subcommand("aic", "AIC curve over a component range");
  for (auto* cmd : {gmm, aic}) {
    cmd->add_option("--samples", gmm_args.samples, "CSV file with a header row")->required();
    cmd->add_option("--column", gmm_args.column, "Column holding the samples");
    cmd->add_option("--cmin", gmm_args.cmin, "Smallest component count");
    cmd->add_option("--cmax", gmm_args.cmax, "Largest component count");
    cmd->add_option("--seed", gmm_args.seed, "Restart seed");
    cmd->add_option("--out", gmm_args.out, "Output directory");
  }

  VarstudyArgs var_args;
  auto* varstudy = analyze->add_subcommand("varstudy", "Three-term variance split on the toy pool");
  varstudy->add_option("--seed", var_args.seed, "Policy seed");
  varstudy->add_option("--policy-scale", var_args.policy_scale, "Std of the random policy logits");
  varstudy->add_option("--offset", var_args.offset, "Constant added to the oracle predictor");
  varstudy->add_option("--out", var_args.out, "Output directory");

  LemmaArgs lemma_args;
  auto* lemma = analyze->add_subcommand("lemma-check", "Baseline invariance of the exact policy gradient");
  lemma->add_option("--seed", lemma_args.seed, "Policy and baseline seed");
  lemma->add_option("--baselines", lemma_args.baselines, "Number of random baselines");
  lemma->add_option("--policy-scale", lemma_args.policy_scale, "Std of the random policy logits");
  lemma->add_option("--baseline-scale", lemma_args.baseline_scale, "Range of the random baselines");

  ClustersArgs cluster_args;
  auto* clusters = analyze->add_subcommand("clusters", "Per-state attention cluster assignments");
  add_run_options(clusters, cluster_args.run);
  clusters->add_option("--episodes", cluster_args.episodes, "Episodes per scene");
  clusters->add_option("--seed", cluster_args.seed, "Episode sampling seed");
  clusters->add_option("--ambiguous", cluster_args.ambiguous, "Confusion above which a state is ambiguous");
  clusters->add_option("--out", cluster_args.out, "Output directory");

  auto* envcmd = app.add_subcommand("env", "Inspect the generated scene pool");
  envcmd->require_subcommand(1);
  EnvArgs env_args;
  auto* show = envcmd->add_subcommand("show", "Print one scene as ASCII art");
  add_config_options(show, env_args.cfg);
  show->add_option("--scene", env_args.scene, "Scene index");
  auto* exportcmd = envcmd->add_subcommand("export", "Write every scene descriptor as JSON");
  add_config_options(exportcmd, env_args.cfg);
  exportcmd->add_option("--out", env_args.out, "Output directory");

  std::vector<const char*> argv{"dvelab"};
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << deepest_parsed(app)->help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << deepest_parsed(app)->help();
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(train_args, out);
    if (bench->parsed()) return cmd_bench(bench_args, out);
    if (values->parsed()) return cmd_values(values_args, out);
    if (gmm->parsed()) return cmd_gmm(gmm_args, true, out);
    if (aic->parsed()) return cmd_gmm(gmm_args, false, out);
    if (varstudy->parsed()) return cmd_varstudy(var_args, out);
    if (lemma->parsed()) return cmd_lemma_check(lemma_args, out);
    if (clusters->parsed()) return cmd_clusters(cluster_args, out);
    if (show->parsed()) return cmd_env_show(env_args, out);
    if (exportcmd->parsed()) return cmd_env_export(env_args, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::ConfigError ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace dvelab::cli
