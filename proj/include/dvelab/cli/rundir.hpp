#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

#include "dvelab/common/kvconfig.hpp"

namespace dvelab::cli {

/// Bad invocation or unreadable configuration. Commands exit with code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// `git describe` of the source tree at configure time, or "unknown".
std::string build_id();

/// Current UTC time as `YYYY-MM-DDTHH:MM:SSZ`.
std::string utc_timestamp();

/// `$DVE_LAB_OUT` when set and non-empty, otherwise `./runs`.
std::filesystem::path output_root();

/// With `explicit_dir`: creates it, or accepts it when it is an empty
/// directory. Otherwise creates `<output_root()>/<stem>`, appending `-2`,
/// `-3`, ... until the name is free. A non-empty directory is never reused;
/// that case throws UsageError.
std::filesystem::path prepare_output_dir(const std::optional<std::filesystem::path>& explicit_dir,
                                         const std::string& stem);

/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

struct RunManifest {
  std::string run_id;
  std::string command;
  std::string build_id;
  std::uint64_t seed = 0;
  KvConfig config;
  std::string started_at;
  std::string finished_at;
  std::string status = "running";  // running | complete | failed
  std::string error;
  /// Artifact name to path relative to the run directory.
  std::map<std::string, std::string> artifacts;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);

  /// Atomically (re)writes `<dir>/manifest.json`.
  void save(const std::filesystem::path& dir) const;
  static RunManifest load(const std::filesystem::path& dir);

  /// Marks the run complete after checking that every artifact exists
  /// (IO_ERROR otherwise), then saves.
  void finalize(const std::filesystem::path& dir);
};

inline constexpr const char* kManifestFile = "manifest.json";

}  // namespace dvelab::cli
