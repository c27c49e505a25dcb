#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dvelab/common/kvconfig.hpp"
#include "dvelab/trainer/config.hpp"
#include "dvelab/trainer/train.hpp"

namespace dvelab::cli {

/// A named, fully specified training setup shared by every mode and seed.
struct BenchSuite {
  std::string name;
  std::string description;
  std::string config;  // `key = value` lines
};

std::span<const BenchSuite> bench_suites();
/// Throws UsageError for an unknown name.
const BenchSuite& find_bench_suite(std::string_view name);

struct BenchRun {
  trainer::CriticMode mode = trainer::CriticMode::Baseline;
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  std::vector<trainer::UpdateRow> rows;
  std::optional<int> cc_activation_update;
  double final_reward = 0.0;
  double final_nav_efficiency = 0.0;
  double final_ep_len = 0.0;
};

struct BenchRow {
  trainer::CriticMode mode = trainer::CriticMode::Baseline;
  int seeds = 0;
  double reward_mean = 0.0;
  double reward_std = 0.0;
  double nav_mean = 0.0;
  double nav_std = 0.0;
  double ep_len_mean = 0.0;
};

struct BenchOptions {
  KvConfig base;
  std::vector<trainer::CriticMode> modes;
  std::vector<std::uint64_t> seeds;
  std::size_t final_window = 10;
  std::optional<int> max_updates;
  std::ostream* progress = nullptr;
};

/// Trains every (mode, seed) pair into `<out_dir>/<mode>-seed<k>/`, each with
/// train_log.csv, final.ckpt and config.resolved.
std::vector<BenchRun> run_bench(const BenchOptions& options, const std::filesystem::path& out_dir);

/// One row per mode in the given order; std is the sample standard
/// deviation over seeds (0 for a single seed).
std::vector<BenchRow> summarize_bench(std::span<const BenchRun> runs,
                                      std::span<const trainer::CriticMode> modes);

void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows);
std::string format_bench_table(std::span<const BenchRow> rows);

}  // namespace dvelab::cli
