#include "dvelab/cli/bench.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "dvelab/analysis/metrics.hpp"
#include "dvelab/cli/rundir.hpp"
#include "dvelab/common/csv.hpp"
#include "dvelab/envkit/scene.hpp"

namespace dvelab::cli {

namespace fs = std::filesystem;

namespace {

const std::array<BenchSuite, 3> kSuites{{
    {"smoke", "4 tiny scenes, 4096 steps; checks the pipeline end to end",
     "n_levels = 4\n"
     "families = corridor:0.5,maze:0.5\n"
     "width = 5\nheight = 5\nobs_window = 3\nt_max = 16\n"
     "trunk = 16,16\nhidden = 16\n"
     "n_workers = 2\nsteps_per_worker_per_update = 128\n"
     "total_env_steps = 4096\n"},
    {"corridor", "20 corridor scenes on an 8x8 grid, 200k steps",
     "n_levels = 20\nfamilies = corridor:1\ntotal_env_steps = 200000\n"},
    {"mixed100", "100-scene maze/hazard pool, 1M steps",
     "n_levels = 100\nfamilies = maze:0.5,hazard:0.5\ntotal_env_steps = 1000000\npretrain_steps = 400000\n"},
}};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd out;
  if (v.empty()) return out;
  for (const double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (const double x : v) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return out;
}

}  // namespace

std::span<const BenchSuite> bench_suites() { return kSuites; }

const BenchSuite& find_bench_suite(std::string_view name) {
  for (const auto& s : kSuites) {
    if (s.name == name) return s;
  }
  std::string known;
  for (const auto& s : kSuites) known += (known.empty() ? "" : ", ") + s.name;
  throw UsageError("unknown bench suite '" + std::string(name) + "' (known: " + known + ")");
}

std::vector<BenchRun> run_bench(const BenchOptions& options, const fs::path& out_dir) {
  std::vector<BenchRun> runs;
  for (const auto mode : options.modes) {
    for (const auto seed : options.seeds) {
      KvConfig kv = options.base;
      kv.set("critic_mode", trainer::to_string(mode));
      kv.set("seed", std::to_string(seed));
      const auto cfg = trainer::TrainConfig::from_kv(kv);
      cfg.validate();
      const auto pool = env::generate_pool(cfg.env, cfg.pool_seed);

      BenchRun run;
      run.mode = mode;
      run.seed = seed;
      run.dir = out_dir / (std::string(trainer::to_string(mode)) + "-seed" + std::to_string(seed));
      if (options.progress) {
        *options.progress << "[bench] " << trainer::to_string(mode) << " seed " << seed << " -> "
                          << run.dir.string() << std::endl;
      }
      trainer::TrainHooks hooks;
      hooks.out_dir = run.dir;
      hooks.max_updates = options.max_updates;
      auto report = trainer::train(cfg, pool, hooks);
      run.rows = std::move(report.rows);
      run.cc_activation_update = report.cc_activation_update;
      run.final_reward = analysis::final_reward(run.rows, options.final_window);
      run.final_nav_efficiency = analysis::final_nav_efficiency(run.rows, options.final_window);
      const std::size_t k = std::min(options.final_window, run.rows.size());
      for (std::size_t i = run.rows.size() - k; i < run.rows.size(); ++i) {
        run.final_ep_len += run.rows[i].mean_ep_len / static_cast<double>(k);
      }
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

std::vector<BenchRow> summarize_bench(std::span<const BenchRun> runs,
                                      std::span<const trainer::CriticMode> modes) {
  std::vector<BenchRow> rows;
  for (const auto mode : modes) {
    std::vector<double> reward;
    std::vector<double> nav;
    std::vector<double> len;
    for (const auto& r : runs) {
      if (r.mode != mode) continue;
      reward.push_back(r.final_reward);
      nav.push_back(r.final_nav_efficiency);
      len.push_back(r.final_ep_len);
    }
    if (reward.empty()) continue;
    BenchRow row;
    row.mode = mode;
    row.seeds = static_cast<int>(reward.size());
    const auto rw = mean_std(reward);
    const auto nv = mean_std(nav);
    row.reward_mean = rw.mean;
    row.reward_std = rw.std;
    row.nav_mean = nv.mean;
    row.nav_std = nv.std;
    row.ep_len_mean = mean_std(len).mean;
    rows.push_back(row);
  }
  return rows;
}

void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows) {
  CsvWriter csv(out, {"mode", "seeds", "reward_mean", "reward_std", "nav_efficiency_mean",
                      "nav_efficiency_std", "ep_len_mean"});
  for (const auto& r : rows) {
    csv.field(trainer::to_string(r.mode)).field(r.seeds).field(r.reward_mean).field(r.reward_std);
    csv.field(r.nav_mean).field(r.nav_std).field(r.ep_len_mean);
    csv.end_row();
  }
}

std::string format_bench_table(std::span<const BenchRow> rows) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "mode" << std::right << std::setw(6) << "seeds"
     << std::setw(22) << "reward" << std::setw(26) << "nav efficiency [x1e-2]" << std::setw(12)
     << "ep_len" << "\n";
  os << std::fixed;
  for (const auto& r : rows) {
    std::ostringstream reward;
    reward << std::fixed << std::setprecision(3) << r.reward_mean << " +- " << r.reward_std;
    std::ostringstream nav;
    nav << std::fixed << std::setprecision(3) << 100.0 * r.nav_mean << " +- " << 100.0 * r.nav_std;
    os << std::left << std::setw(12) << trainer::to_string(r.mode) << std::right << std::setw(6)
       << r.seeds << std::setw(22) << reward.str() << std::setw(26) << nav.str() << std::setw(12)
       << std::setprecision(2) << r.ep_len_mean << "\n";
  }
  return os.str();
}

}  // namespace dvelab::cli
